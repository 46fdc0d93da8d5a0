"""
Segment-level apnoea/hypopnoea classifiers.

AudioEncoderModel: 3 x [conv, batch_norm, relu, max_pool(4, 4)] -> flatten ->
linear 512 -> linear 1 -> sigmoid.

FusionModel: the same audio encoder, plus the frozen effort estimator's
respiratory embedding concatenated after the 512-d projection, then one
hidden fusion layer and a sigmoid head.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..config.config import OsaModelConfig
from ..errors import MissingClass, ShapeMismatch
from ..nn.layers import LayerSpec, Mode, Parameter, conv_block
from ..nn.network import Network, Sequential
from .effort_estimator import EffortEstimatorModel
from .inputs import SegmentLike, stack_segments

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


class ClassCounts(BaseModel):
    """Per-class segment counts of a training split"""
    negative: int
    positive: int

    @property
    def total(self) -> int:
        return self.negative + self.positive

    @classmethod
    def of(cls, labels: Sequence[int]) -> "ClassCounts":
        y = np.asarray(labels)
        return cls(negative=int(np.sum(y == 0)), positive=int(np.sum(y == 1)))


def class_weights(counts: ClassCounts) -> Tuple[float, float]:
    """
    (w_negative, w_positive) with w_c = N / (2 N_c)

    Raises:
        MissingClass: A class has no samples
    """
    if counts.negative <= 0 or counts.positive <= 0:
        raise MissingClass(f"class weights need both classes, got {counts.negative} negative / {counts.positive} positive")
    n = counts.total
    return n / (2.0 * counts.negative), n / (2.0 * counts.positive)


def weighted_bce(p: np.ndarray, y: np.ndarray, counts: ClassCounts) -> Tuple[float, np.ndarray]:
    """
    Class-weighted binary cross-entropy, averaged over the batch

    Args:
        p: Predicted probabilities (clamped to [1e-7, 1 - 1e-7])
        y: Binary labels
        counts: Training-split class counts for the weights

    Returns:
        (loss, dloss/dp); the clamp passes gradients straight through
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"probabilities {p.shape} and labels {y.shape} differ")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary (0/1)")
    if (np.any(y == 1) and counts.positive <= 0) or (np.any(y == 0) and counts.negative <= 0):
        raise MissingClass("batch contains a class with zero training count")

    n_total = counts.total
    w_neg = n_total / (2.0 * counts.negative) if counts.negative else 0.0
    w_pos = n_total / (2.0 * counts.positive) if counts.positive else 0.0
    w = np.where(y == 1, w_pos, w_neg)

    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.size
    loss = -np.sum(w * (y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))) / n
    grad = -w * (y / pc - (1.0 - y) / (1.0 - pc)) / n
    return float(loss), grad


def _audio_cnn_specs(cfg: OsaModelConfig):
    specs = []
    in_channels = 1
    for channels in cfg.channels:
        specs.extend(conv_block(in_channels, channels, cfg.kernel_size, cfg.pool))
        in_channels = channels
    specs.append(LayerSpec(kind="flatten"))
    return specs


class AudioEncoderModel(Network):
    """Audio-only CNN baseline"""
    kind = "audio_only"

    def __init__(self, config: Optional[OsaModelConfig] = None, seed: int = 0, zero_head: bool = False):
        super().__init__(seed)
        self.config = config or OsaModelConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)

        self.cnn = self.add("cnn", Sequential.from_specs(_audio_cnn_specs(cfg), rng))
        self.projection = self.add(
            "projection",
            Sequential.from_specs(
                [
                    LayerSpec(kind="linear", in_features=cfg.flat_dim, out_features=cfg.embedding_dim),
                    LayerSpec(kind="relu"),
                ],
                rng,
            ),
        )
        self.head = self.add("head", Sequential.from_specs(self._head_specs(zero_head), rng))

    def _head_specs(self, zero_head: bool):
        return [
            LayerSpec(kind="linear", in_features=self.config.embedding_dim, out_features=1, zero_init=zero_head),
            LayerSpec(kind="sigmoid"),
        ]

    def config_snapshot(self) -> dict:
        return {"kind": self.kind, "model": self.config.model_dump(mode="json")}

    @classmethod
    def from_snapshot(cls, snapshot: dict, seed: int) -> "AudioEncoderModel":
        return cls(OsaModelConfig.model_validate(snapshot["model"]), seed=seed)

    def prepare(self, segments: Sequence[SegmentLike]) -> np.ndarray:
        return stack_segments(segments, self.config.input_frames, self.config.mel_bins)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.config.input_frames, self.config.mel_bins):
            raise ShapeMismatch(
                f"classifier expects (B, {self.config.input_frames}, {self.config.mel_bins}), got {x.shape}"
            )
        return x

    def audio_embedding(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        """(B, T, F) -> (B, embedding_dim)"""
        x = self._check(x)
        return self.projection.forward(self.cnn.forward(x[:, None, :, :], mode, record), mode, record)

    def audio_backward(self, grad: np.ndarray) -> np.ndarray:
        return self.cnn.backward(self.projection.backward(grad))[:, 0]

    def forward(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        """(B, T, F) -> probabilities (B,)"""
        return self.head.forward(self.audio_embedding(x, mode, record), mode, record)[:, 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return self.audio_backward(self.head.backward(grad[:, None]))

    def predict(self, segments: Sequence[SegmentLike]) -> np.ndarray:
        return self.forward(self.prepare(segments), "eval", record=False)


class FusionModel(AudioEncoderModel):
    """
    Latent fusion of the audio embedding with a frozen respiratory embedding.

    The effort estimator's tensors live under the "effort." prefix and are
    excluded from trainable_parameters().
    """
    kind = "latent_fusion"
    FROZEN_PREFIX = "effort."

    def __init__(
        self,
        effort_model: EffortEstimatorModel,
        config: Optional[OsaModelConfig] = None,
        seed: int = 0,
        zero_head: bool = False,
    ):
        self.effort = effort_model
        super().__init__(config, seed, zero_head)
        geometry = (self.config.input_frames, self.config.mel_bins)
        if (effort_model.config.input_frames, effort_model.config.mel_bins) != geometry:
            raise ShapeMismatch("effort estimator and classifier must share the log-Mel geometry")
        for name, part in effort_model.parts.items():
            self.add(f"{self.FROZEN_PREFIX}{name}", part)

    def _head_specs(self, zero_head: bool):
        cfg = self.config
        return [
            LayerSpec(kind="linear", in_features=self.fused_dim, out_features=cfg.fusion_dim),
            LayerSpec(kind="relu"),
            LayerSpec(kind="linear", in_features=cfg.fusion_dim, out_features=1, zero_init=zero_head),
            LayerSpec(kind="sigmoid"),
        ]

    @property
    def fused_dim(self) -> int:
        return self.config.embedding_dim + self.effort.embedding_dim

    def trainable_parameters(self) -> Dict[str, Parameter]:
        return {
            name: param
            for name, param in self.named_parameters().items()
            if not name.startswith(self.FROZEN_PREFIX)
        }

    def config_snapshot(self) -> dict:
        return {
            "kind": self.kind,
            "model": self.config.model_dump(mode="json"),
            "effort": self.effort.config_snapshot(),
            "effort_seed": self.effort.seed,
        }

    @classmethod
    def from_snapshot(cls, snapshot: dict, seed: int) -> "FusionModel":
        effort = EffortEstimatorModel.from_snapshot(snapshot["effort"], snapshot.get("effort_seed", 0))
        return cls(effort, OsaModelConfig.model_validate(snapshot["model"]), seed=seed)

    def forward(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        x = self._check(x)
        respiratory = self.effort.embed(x)
        fused = np.concatenate([self.audio_embedding(x, mode, record), respiratory], axis=1)
        return self.head.forward(fused, mode, record)[:, 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        d_fused = self.head.backward(grad[:, None])
        return self.audio_backward(d_fused[:, :self.config.embedding_dim])


def classify_segment(model: AudioEncoderModel, seg: SegmentLike) -> float:
    """Eval-mode probability for one segment"""
    return float(model.predict([seg])[0])
