"""
Two-stage training: the effort estimator (1 - CCC), then the OSA
classifier (weighted BCE), audio-only or fused with the frozen estimator.
"""
import logging
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ..config.config import RunConfig, TrainingConfig
from ..errors import EmptyDataset, MissingCheckpoint, SingleClass
from ..models.effort_estimator import EffortEstimatorModel, ccc_loss, score_traces
from ..models.osa_classifier import AudioEncoderModel, ClassCounts, FusionModel, class_weights, weighted_bce
from ..nn.network import Network
from ..nn.optim import Adam
from ..scoring.metrics import roc_auc
from ..storage.segment_dataset import SegmentDataset
from .evaluation import predict_effort, segment_probabilities

logger = logging.getLogger(__name__)

ModelKind = Literal["audio_only", "latent_fusion"]


class EpochRecord(BaseModel):
    epoch: int
    steps: int
    train_loss: float
    val_score: float
    val_metric: str


class TrainingHistory(BaseModel):
    model_kind: str
    seed: int
    epochs: List[EpochRecord] = []
    step_losses: List[float] = []
    best_epoch: int = -1
    best_score: float = float("-inf")
    stopped_early: bool = False


def _fit(
    model: Network,
    train: SegmentDataset,
    training: TrainingConfig,
    seed: int,
    batch_loss: Callable[[np.ndarray, List[int]], Tuple[float, np.ndarray]],
    validate: Callable[[], Tuple[float, str]],
    history: TrainingHistory,
) -> Network:
    """
    Mini-batch Adam with early stopping on a validation score (higher is better)

    The best-scoring state is restored before returning.
    """
    rng = np.random.default_rng(seed)
    optimizer = Adam(model.trainable_parameters(), lr=training.lr)
    best_state = model.state_dict()
    stale = 0
    steps = 0

    for epoch in range(training.max_epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), training.batch_size):
            indices = order[start:start + training.batch_size].tolist()
            x = model.prepare(train.features_batch(indices))

            model.zero_grad()
            output = model.forward(x, "train")
            loss, grad = batch_loss(output, indices)
            model.backward(grad)
            model.check_gradients()
            optimizer.step()

            losses.append(loss)
            history.step_losses.append(loss)
            steps += 1
            if training.max_steps is not None and steps >= training.max_steps:
                break

        score, metric = validate()
        history.epochs.append(
            EpochRecord(epoch=epoch, steps=steps, train_loss=float(np.mean(losses)), val_score=score, val_metric=metric)
        )
        logger.info(f"Epoch {epoch}: train loss {np.mean(losses):.4f}, val {metric} {score:.4f}")

        if score > history.best_score:
            history.best_score = score
            history.best_epoch = epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1

        if training.max_steps is not None and steps >= training.max_steps:
            break
        if stale >= training.patience:
            history.stopped_early = True
            logger.info(f"Early stopping after epoch {epoch} (best epoch {history.best_epoch})")
            break

    model.load_state_dict(best_state)
    return model


def train_effort(
    train: SegmentDataset,
    val: SegmentDataset,
    config: RunConfig,
    seed: Optional[int] = None,
) -> Tuple[EffortEstimatorModel, TrainingHistory]:
    """
    Fit the effort estimator with 1 - CCC, early-stopping on validation CCC

    Args:
        train: Segments with effort references
        val: Subject-disjoint validation segments
        config: Run configuration (effort_model, effort_training)
        seed: Overrides config.seed

    Returns:
        (best-validation model, history)
    """
    seed = config.seed if seed is None else seed
    for name, split in (("training", train), ("validation", val)):
        if len(split) == 0 or not split.has_effort():
            raise EmptyDataset(f"{name} split has no segments with effort references")

    model = EffortEstimatorModel(config.effort_model, seed=seed)
    history = TrainingHistory(model_kind=model.kind, seed=seed)
    refs = [r.effort.values for r in train.records]
    val_refs = [r.effort.values for r in val.records]
    batch_size = config.effort_training.batch_size

    def batch_loss(pred, indices):
        return ccc_loss(pred, np.stack([refs[i] for i in indices]))

    def validate():
        preds = predict_effort(model, val, batch_size=batch_size)
        return score_traces(preds, val_refs).ccc_mean, "ccc"

    logger.info(f"🚀 Training effort estimator on {len(train)} segments ({model.parameter_count()} parameters)")
    _fit(model, train, config.effort_training, seed, batch_loss, validate, history)
    logger.info(f"✅ Effort estimator done: best val CCC {history.best_score:.4f} at epoch {history.best_epoch}")
    return model, history


def train_osa(
    model_kind: ModelKind,
    train: SegmentDataset,
    val: SegmentDataset,
    config: RunConfig,
    frozen_effort: Optional[EffortEstimatorModel] = None,
    seed: Optional[int] = None,
) -> Tuple[AudioEncoderModel, TrainingHistory]:
    """
    Fit a segment classifier with class-weighted BCE, early-stopping on validation AUC

    Args:
        model_kind: "audio_only" or "latent_fusion"
        train: Labelled training segments
        val: Labelled, subject-disjoint validation segments
        config: Run configuration (osa_model, osa_training)
        frozen_effort: Trained effort estimator, required for latent_fusion
        seed: Overrides config.seed

    Returns:
        (best-validation model, history)
    """
    seed = config.seed if seed is None else seed
    for name, split in (("training", train), ("validation", val)):
        if len(split) == 0 or not split.has_labels():
            raise EmptyDataset(f"{name} split has no labelled segments")

    counts = ClassCounts.of(train.labels())
    w_neg, w_pos = class_weights(counts)
    logger.info(f"Class counts {counts.negative}/{counts.positive}, weights {w_neg:.3f}/{w_pos:.3f}")

    if model_kind == "latent_fusion":
        if frozen_effort is None:
            raise MissingCheckpoint("latent fusion needs a trained effort estimator")
        model = FusionModel(frozen_effort, config.osa_model, seed=seed)
    elif model_kind == "audio_only":
        model = AudioEncoderModel(config.osa_model, seed=seed)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")

    history = TrainingHistory(model_kind=model.kind, seed=seed)
    labels = train.labels()
    val_labels = val.labels()
    batch_size = config.osa_training.batch_size

    def batch_loss(probs, indices):
        return weighted_bce(probs, labels[indices], counts)

    def validate():
        probs = segment_probabilities(model, val, batch_size=batch_size)
        try:
            return roc_auc(probs, val_labels), "auc"
        except SingleClass:
            return -weighted_bce(probs, val_labels, counts)[0], "neg_loss"

    logger.info(f"🚀 Training {model.kind} classifier on {len(train)} segments")
    _fit(model, train, config.osa_training, seed, batch_loss, validate, history)
    logger.info(f"✅ {model.kind} done: best val score {history.best_score:.4f} at epoch {history.best_epoch}")
    return model, history
