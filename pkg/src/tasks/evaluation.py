"""
Inference over datasets and night-level evaluation
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from ..config.config import RunConfig
from ..dsp.features import AudioNight, featurize_segment, segment_night
from ..errors import EmptyDataset, SingleClass, UnsupportedSampleRate
from ..models.effort_estimator import EffortEstimatorModel, EffortEvaluation, score_traces
from ..models.osa_classifier import AudioEncoderModel
from ..scoring.events import NightReport, build_night_report, recorded_tst
from ..scoring.metrics import CutoffMetrics, cutoff_metrics, roc_auc, roc_points
from ..storage.segment_dataset import SegmentDataset
from .worker import parallel_map

logger = logging.getLogger(__name__)


def _batches(indices: Sequence[int], batch_size: int):
    for start in range(0, len(indices), batch_size):
        yield list(indices[start:start + batch_size])


def predict_effort(
    model: EffortEstimatorModel,
    dataset: SegmentDataset,
    indices: Optional[Sequence[int]] = None,
    batch_size: int = 32,
) -> np.ndarray:
    """(N, trace_points) eval-mode effort predictions"""
    indices = list(range(len(dataset))) if indices is None else list(indices)
    out = [model.predict(dataset.features_batch(chunk)) for chunk in _batches(indices, batch_size)]
    return np.concatenate(out, axis=0) if out else np.empty((0, model.config.trace_points))


def evaluate_effort_dataset(model: EffortEstimatorModel, dataset: SegmentDataset, batch_size: int = 32) -> EffortEvaluation:
    """Per-segment CCC / RMSE / MAE over a dataset with effort references"""
    if len(dataset) == 0 or not dataset.has_effort():
        raise EmptyDataset("effort evaluation needs segments with effort references")
    preds = predict_effort(model, dataset, batch_size=batch_size)
    result = score_traces(preds, [r.effort.values for r in dataset.records])
    logger.info(f"Effort evaluation on {result.n_segments} segments: {result.row()}")
    return result


def segment_probabilities(
    model: AudioEncoderModel,
    dataset: SegmentDataset,
    indices: Optional[Sequence[int]] = None,
    batch_size: int = 32,
) -> np.ndarray:
    """Eval-mode event probabilities, one per segment"""
    indices = list(range(len(dataset))) if indices is None else list(indices)
    out = [model.predict(dataset.features_batch(chunk)) for chunk in _batches(indices, batch_size)]
    return np.concatenate(out) if out else np.empty(0)


def segment_auc(model: AudioEncoderModel, dataset: SegmentDataset, batch_size: int = 32) -> float:
    if not dataset.has_labels():
        raise EmptyDataset("segment AUC needs labelled segments")
    return roc_auc(segment_probabilities(model, dataset, batch_size=batch_size), dataset.labels())


def night_probs(dataset: SegmentDataset, probs: np.ndarray) -> Dict[str, List[Tuple[float, float]]]:
    """Group per-segment probabilities by night as sorted (start_s, prob) pairs"""
    grouped: Dict[str, List[Tuple[float, float]]] = {}
    for night_id, indices in dataset.night_indices().items():
        pairs = [(dataset.records[i].index.start_s, float(probs[i])) for i in indices]
        grouped[night_id] = sorted(pairs)
    return grouped


def _report(
    night_id: str,
    probs: Sequence[Tuple[float, float]],
    duration_s: float,
    total_sleep_time_h: Optional[float],
    config: RunConfig,
) -> NightReport:
    tst_h, source = recorded_tst(duration_s, total_sleep_time_h)
    return build_night_report(
        night_id,
        probs,
        tst_h,
        source,
        config.scoring,
        window_s=config.features.duration_s,
        config_hash=config.config_hash(),
        seed=config.seed,
    )


def night_segment_probs(
    model: AudioEncoderModel,
    night: AudioNight,
    config: RunConfig,
    n_workers: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """
    Slide the configured window over a night and classify every segment

    Features go through float32 like the dataset path, so a night scored
    here and the same night scored from a manifest agree exactly.
    """
    features = config.features
    if night.sample_rate_hz != features.sample_rate_hz:
        raise UnsupportedSampleRate(
            f"night {night.night_id} is sampled at {night.sample_rate_hz} Hz, config expects {features.sample_rate_hz} Hz"
        )
    segments = segment_night(night, features.duration_s, features.shift_s)

    def featurize(item):
        index, samples = item
        values = featurize_segment(index, samples, night.sample_rate_hz, features).values
        return values.astype(np.float32).astype(np.float64)

    maps = parallel_map(featurize, segments, n_workers)
    probs = []
    for start in range(0, len(maps), config.osa_training.batch_size):
        probs.extend(model.predict(maps[start:start + config.osa_training.batch_size]).tolist())
    return [(index.start_s, float(p)) for (index, _), p in zip(segments, probs)]


def night_report(
    model: AudioEncoderModel,
    night: AudioNight,
    config: RunConfig,
    n_workers: Optional[int] = None,
) -> NightReport:
    """
    Full screening chain for one night: segment -> probability -> merge -> AHI -> severity

    Args:
        model: Trained audio-only or fusion classifier
        night: Audio night (metadata TST used when present)
        config: Run configuration (features, scoring)
        n_workers: Featurisation threads

    Returns:
        NightReport
    """
    probs = night_segment_probs(model, night, config, n_workers)
    return _report(night.night_id, probs, night.duration_s, night.total_sleep_time_h, config)


def dataset_night_reports(
    dataset: SegmentDataset,
    probs: np.ndarray,
    config: RunConfig,
    n_workers: Optional[int] = None,
) -> List[NightReport]:
    """One NightReport per dataset night from precomputed segment probabilities, in dataset order"""
    grouped = night_probs(dataset, probs)

    def report(night_id: str) -> NightReport:
        info = dataset.nights[night_id]
        return _report(night_id, grouped[night_id], info.duration_s, info.total_sleep_time_h, config)

    return parallel_map(report, list(grouped), n_workers)


def oracle_probabilities(dataset: SegmentDataset) -> np.ndarray:
    """Reference segment labels as 0/1 probabilities"""
    if not dataset.has_labels():
        raise EmptyDataset("oracle predictions need labelled segments")
    return dataset.labels().astype(np.float64)


def reference_ahi(dataset: SegmentDataset) -> Dict[str, float]:
    """
    Reference AHI per night

    Counts labelled events when a night has them; the merge pipeline is not involved.
    """
    ahis = {}
    for night_id, info in dataset.nights.items():
        tst_h, _ = recorded_tst(info.duration_s, info.total_sleep_time_h)
        if info.events is None:
            continue
        ahis[night_id] = len(info.events) / tst_h
    return ahis


class NightEvaluation(BaseModel):
    model: str
    config_hash: str
    seed: int
    segment_auc: Optional[float] = None
    nights: List[Dict[str, object]]
    cutoffs: List[CutoffMetrics]


def evaluate_nights(
    name: str,
    dataset: SegmentDataset,
    probs: np.ndarray,
    config: RunConfig,
    n_workers: Optional[int] = None,
) -> NightEvaluation:
    """
    Segment AUC plus per-night predicted vs reference AHI and cut-off metrics

    Args:
        name: Model label for the report
        dataset: Labelled dataset
        probs: Per-segment probabilities aligned with dataset records
        config: Run configuration (scoring thresholds, cut-offs)

    Returns:
        NightEvaluation
    """
    reports = dataset_night_reports(dataset, probs, config, n_workers)
    reference = reference_ahi(dataset)

    auc = None
    if dataset.has_labels():
        try:
            auc = roc_auc(probs, dataset.labels())
        except SingleClass:
            logger.warning(f"{name}: segment labels hold a single class, AUC skipped")

    rows = []
    pred_ahi, ref_ahi = [], []
    for report in reports:
        ref = reference.get(report.night_id)
        rows.append({
            "night_id": report.night_id,
            "predicted_ahi": report.ahi,
            "reference_ahi": ref,
            "severity": report.severity.value,
        })
        if ref is not None:
            pred_ahi.append(report.ahi)
            ref_ahi.append(ref)

    return NightEvaluation(
        model=name,
        config_hash=config.config_hash(),
        seed=config.seed,
        segment_auc=auc,
        nights=rows,
        cutoffs=cutoff_metrics(pred_ahi, ref_ahi, config.scoring.cutoffs),
    )


def write_night_report(report: NightReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return path


def write_roc_table(
    scores: Sequence[float],
    labels: Sequence[int],
    path: Union[str, Path],
    config_hash: str = "",
    seed: int = 0,
) -> Path:
    """
    Write `threshold,sensitivity,specificity` rows for plotting

    The first line is a comment carrying the config hash and seed.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# config_hash={config_hash} seed={seed}", "threshold,sensitivity,specificity"]
    for threshold, sens, spec in roc_points(scores, labels):
        lines.append(f"{threshold!r},{sens!r},{spec!r}")
    path.write_text("\n".join(lines) + "\n")
    logger.info(f"ROC table with {len(lines) - 2} operating points written to {path}")
    return path
