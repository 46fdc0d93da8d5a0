"""
Audio-to-respiratory-effort regressor.

log-Mel (T, F) -> 3 x [conv, batch_norm, relu, max_pool] -> BiLSTM ->
per-step linear decoder -> linear interpolation onto the 32 Hz trace grid.
Trained with 1 - CCC.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..config.config import EffortModelConfig
from ..dsp.features import SegmentIndex
from ..errors import DegenerateInput, EmptyDataset, ShapeMismatch
from ..nn.layers import LayerSpec, Mode, conv_block
from ..nn.network import Network, Sequential
from .inputs import SegmentLike, stack_segments

logger = logging.getLogger(__name__)

EFFORT_RATE_HZ = 32
CCC_EPS = 1e-8
DEGENERATE_DENOMINATOR = 1e-12
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MomentStats:
    mu_x: float
    mu_y: float
    var_x: float
    var_y: float
    cov_xy: float


def moment_stats(x: Sequence[float], y: Sequence[float]) -> MomentStats:
    """Population (1/N) moments of a pair of sequences"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeMismatch(f"ccc needs equal-length 1-D sequences, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise DegenerateInput("ccc needs at least two points", module="effort-estimator")
    mu_x, mu_y = x.mean(), y.mean()
    dx, dy = x - mu_x, y - mu_y
    return MomentStats(
        mu_x=float(mu_x),
        mu_y=float(mu_y),
        var_x=float(np.mean(dx * dx)),
        var_y=float(np.mean(dy * dy)),
        cov_xy=float(np.mean(dx * dy)),
    )


def ccc(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Concordance correlation coefficient

    2 cov / (var_x + var_y + (mu_x - mu_y)^2) with population moments.

    Raises:
        DegenerateInput: The denominator vanishes (both constant with equal means)
    """
    m = moment_stats(x, y)
    denominator = m.var_x + m.var_y + (m.mu_x - m.mu_y) ** 2
    if denominator < DEGENERATE_DENOMINATOR:
        raise DegenerateInput("ccc undefined: both sequences constant with equal means", module="effort-estimator")
    return 2.0 * m.cov_xy / denominator


def ccc_loss(pred: np.ndarray, ref: np.ndarray, eps: float = CCC_EPS) -> Tuple[float, np.ndarray]:
    """
    Mean of 1 - CCC over a batch, with its gradient wrt pred

    Args:
        pred: (B, P) or (P,) predicted traces
        ref: Same shape, z-normalised references

    Returns:
        (loss, dloss/dpred) with dloss/dpred shaped like pred
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ShapeMismatch(f"pred {pred.shape} and ref {ref.shape} differ")
    squeeze = pred.ndim == 1
    x = np.atleast_2d(pred)
    y = np.atleast_2d(ref)
    batch, n = x.shape
    if n < 2:
        raise DegenerateInput("ccc needs at least two points", module="effort-estimator")

    mx = x.mean(axis=1, keepdims=True)
    my = y.mean(axis=1, keepdims=True)
    dx, dy = x - mx, y - my
    var_x = np.mean(dx * dx, axis=1, keepdims=True)
    var_y = np.mean(dy * dy, axis=1, keepdims=True)
    cov = np.mean(dx * dy, axis=1, keepdims=True)

    numerator = 2.0 * cov
    raw_denominator = var_x + var_y + (mx - my) ** 2
    # eps floors the denominator; non-degenerate pairs keep the exact CCC
    floored = raw_denominator < eps
    denominator = np.where(floored, eps, raw_denominator)
    rho = numerator / denominator

    d_num = 2.0 * dy / n
    d_den = np.where(floored, 0.0, 2.0 * dx / n + 2.0 * (mx - my) / n)
    d_rho = (d_num * denominator - numerator * d_den) / denominator ** 2
    grad = -d_rho / batch

    loss = float(np.mean(1.0 - rho))
    return loss, (grad[0] if squeeze else grad)


@dataclass
class EffortTrace:
    """One segment of effort at 32 Hz, z-normalised"""
    values: np.ndarray
    normalization: Tuple[float, float]
    segment: Optional[SegmentIndex] = None

    @classmethod
    def from_raw(cls, raw: np.ndarray, segment: Optional[SegmentIndex] = None) -> "EffortTrace":
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 1 or not np.all(np.isfinite(raw)):
            raise ValueError("effort trace must be a finite 1-D sequence")
        if segment is not None and raw.size != expected_points(segment.duration_s):
            raise ShapeMismatch(
                f"effort trace has {raw.size} points, a {segment.duration_s} s segment needs {expected_points(segment.duration_s)}"
            )
        mean = float(raw.mean())
        std = float(raw.std())
        if std < STD_FLOOR:
            std = 1.0
        return cls(values=(raw - mean) / std, normalization=(mean, std), segment=segment)


def expected_points(duration_s: float) -> int:
    return int(round(duration_s * EFFORT_RATE_HZ))


def interpolation_matrix(n_steps: int, n_points: int) -> np.ndarray:
    """
    (n_points, n_steps) linear interpolation weights onto a uniform grid

    out[0] = in[0] and out[-1] = in[-1]; in between, piecewise linear.
    """
    if n_steps < 2 or n_points < 2:
        raise ShapeMismatch(f"interpolation needs at least two knots and two points, got {n_steps} -> {n_points}")
    positions = np.linspace(0.0, n_steps - 1, n_points)
    lower = np.minimum(np.floor(positions).astype(np.int64), n_steps - 2)
    frac = positions - lower
    matrix = np.zeros((n_points, n_steps))
    rows = np.arange(n_points)
    matrix[rows, lower] = 1.0 - frac
    matrix[rows, lower + 1] += frac
    return matrix


class EffortEstimatorModel(Network):
    """
    CNN-BiLSTM effort regressor.

    Default geometry maps a (1500, 64) log-Mel map to a (187, 128) hidden
    sequence and a 960-point trace.
    """
    kind = "effort_estimator"

    def __init__(self, config: Optional[EffortModelConfig] = None, seed: int = 0):
        super().__init__(seed)
        self.config = config or EffortModelConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)

        specs: List[LayerSpec] = []
        in_channels = 1
        for channels in cfg.channels:
            specs.extend(conv_block(in_channels, channels, cfg.kernel_size, cfg.pool))
            in_channels = channels
        specs.append(LayerSpec(kind="to_sequence"))

        self.cnn = self.add("cnn", Sequential.from_specs(specs, rng))
        self.encoder = self.add(
            "encoder",
            Sequential.from_specs(
                [LayerSpec(kind="bilstm", in_features=cfg.channels[-1] * cfg.freq_out, hidden_size=cfg.hidden_size)],
                rng,
            ),
        )
        self.decoder = self.add(
            "decoder",
            Sequential.from_specs([LayerSpec(kind="linear", in_features=2 * cfg.hidden_size, out_features=1)], rng),
        )
        self.interp = interpolation_matrix(cfg.n_steps, cfg.trace_points)

    @property
    def embedding_dim(self) -> int:
        return 2 * self.config.hidden_size

    def config_snapshot(self) -> dict:
        return {"kind": self.kind, "model": self.config.model_dump(mode="json")}

    @classmethod
    def from_snapshot(cls, snapshot: dict, seed: int) -> "EffortEstimatorModel":
        return cls(EffortModelConfig.model_validate(snapshot["model"]), seed=seed)

    def prepare(self, segments: Sequence[SegmentLike]) -> np.ndarray:
        return stack_segments(segments, self.config.input_frames, self.config.mel_bins)

    def encode(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        """(B, T, F) -> BiLSTM hidden states (B, n_steps, 2H)"""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.config.input_frames, self.config.mel_bins):
            raise ShapeMismatch(
                f"effort estimator expects (B, {self.config.input_frames}, {self.config.mel_bins}), got {x.shape}"
            )
        features = self.cnn.forward(x[:, None, :, :], mode, record)
        return self.encoder.forward(features, mode, record)

    def decode_and_interpolate(self, hidden: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        """
        Per-step projection then interpolation onto the trace grid

        Args:
            hidden: (n_steps, 2H) or (B, n_steps, 2H)

        Returns:
            (trace_points,) or (B, trace_points)
        """
        hidden = np.asarray(hidden, dtype=np.float64)
        single = hidden.ndim == 2
        batch = hidden[None] if single else hidden
        if batch.ndim != 3 or batch.shape[1:] != (self.config.n_steps, self.embedding_dim):
            raise ShapeMismatch(
                f"decoder expects ({self.config.n_steps}, {self.embedding_dim}) hidden states, got {hidden.shape}"
            )
        steps = self.decoder.forward(batch, mode, record)[..., 0]
        trace = steps @ self.interp.T
        return trace[0] if single else trace

    def forward(self, x: np.ndarray, mode: Mode = "eval", record: Optional[bool] = None) -> np.ndarray:
        """(B, T, F) -> (B, trace_points)"""
        return self.decode_and_interpolate(self.encode(x, mode, record), mode, record)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        d_steps = grad @ self.interp
        d_hidden = self.decoder.backward(d_steps[..., None])
        d_features = self.encoder.backward(d_hidden)
        return self.cnn.backward(d_features)[:, 0]

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode embeddings (B, 2H); mean over time or final states per config"""
        hidden = self.encode(x, "eval", record=False)
        if self.config.embedding == "final":
            h = self.config.hidden_size
            return np.concatenate([hidden[:, -1, :h], hidden[:, 0, h:]], axis=1)
        return hidden.mean(axis=1)

    def predict(self, segments: Sequence[SegmentLike]) -> np.ndarray:
        return self.forward(self.prepare(segments), "eval", record=False)


def respiratory_embedding(model: EffortEstimatorModel, seg: SegmentLike) -> np.ndarray:
    """Frozen-model embedding of one segment (length 2 * hidden_size)"""
    return model.embed(model.prepare([seg]))[0]


class EffortEvaluation(BaseModel):
    n_segments: int
    n_skipped: int = 0
    ccc_mean: float
    ccc_std: float
    rmse_mean: float
    rmse_std: float
    mae_mean: float
    mae_std: float

    def row(self) -> str:
        """CCC ± std | RMSE ± std | MAE ± std"""
        return (
            f"{self.ccc_mean:.3f} ± {self.ccc_std:.3f} | "
            f"{self.rmse_mean:.3f} ± {self.rmse_std:.3f} | "
            f"{self.mae_mean:.3f} ± {self.mae_std:.3f}"
        )


def score_traces(preds: Iterable[np.ndarray], refs: Iterable[np.ndarray]) -> EffortEvaluation:
    """Per-segment CCC, RMSE and MAE aggregated as mean and std"""
    cccs, rmses, maes = [], [], []
    skipped = 0
    for pred, ref in zip(preds, refs):
        pred = np.asarray(pred, dtype=np.float64)
        ref = np.asarray(ref, dtype=np.float64)
        err = pred - ref
        try:
            cccs.append(ccc(pred, ref))
        except DegenerateInput:
            skipped += 1
            continue
        rmses.append(float(np.sqrt(np.mean(err * err))))
        maes.append(float(np.mean(np.abs(err))))

    if not cccs:
        raise EmptyDataset("no scorable segments")
    if skipped:
        logger.warning(f"Skipped {skipped} degenerate segments while scoring effort")
    return EffortEvaluation(
        n_segments=len(cccs),
        n_skipped=skipped,
        ccc_mean=float(np.mean(cccs)),
        ccc_std=float(np.std(cccs)),
        rmse_mean=float(np.mean(rmses)),
        rmse_std=float(np.std(rmses)),
        mae_mean=float(np.mean(maes)),
        mae_std=float(np.std(maes)),
    )


def evaluate_effort(
    model: EffortEstimatorModel,
    dataset: Sequence[Tuple[SegmentLike, EffortTrace]],
    batch_size: int = 32,
) -> EffortEvaluation:
    """
    Score a model on (segment, reference trace) pairs

    Args:
        model: Trained effort estimator
        dataset: (LogMelSegment, EffortTrace) pairs
        batch_size: Inference batch size

    Returns:
        EffortEvaluation
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    preds = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        preds.extend(model.predict([seg for seg, _ in chunk]))
    result = score_traces(preds, [trace.values for _, trace in dataset])
    logger.info(f"Effort evaluation on {result.n_segments} segments: {result.row()}")
    return result
