"""
Delay estimation between the smartphone audio and a reference channel.

Both signals are reduced to 500 Hz amplitude envelopes and the lag is the
argmax of the normalized (per-lag Pearson) cross-correlation.
"""
import logging
from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.signal import correlate, resample_poly

from ..errors import DegenerateInput, EmptyInput

logger = logging.getLogger(__name__)

ENVELOPE_RATE_HZ = 500


@dataclass(frozen=True)
class LagEstimate:
    lag_samples: int
    lag_s: float
    peak_normalized_correlation: float

    def to_dict(self):
        return {
            "lag_samples": self.lag_samples,
            "lag_s": self.lag_s,
            "peak_normalized_correlation": self.peak_normalized_correlation,
        }


def downsample_envelope(samples: np.ndarray, from_hz: int, to_hz: int = ENVELOPE_RATE_HZ) -> np.ndarray:
    """
    Rectify, average over one output period and decimate

    Integer ratios use block means; other ratios go through a polyphase resampler.
    """
    x = np.abs(np.asarray(samples, dtype=np.float64))
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("cannot build an envelope from an empty signal", module="alignment")

    if from_hz % to_hz == 0:
        factor = from_hz // to_hz
        usable = (x.size // factor) * factor
        return x[:usable].reshape(-1, factor).mean(axis=1)

    period = max(1, int(round(from_hz / to_hz)))
    smoothed = np.convolve(x, np.full(period, 1.0 / period), mode="same")
    g = gcd(from_hz, to_hz)
    envelope = resample_poly(smoothed, to_hz // g, from_hz // g)
    return np.maximum(envelope, 0.0)


def _window_sums(x: np.ndarray, lags: np.ndarray, other_len: int, leading: bool):
    """Sum and sum of squares of x over the overlap at each lag."""
    c1 = np.concatenate(([0.0], np.cumsum(x)))
    c2 = np.concatenate(([0.0], np.cumsum(x * x)))
    n = x.size
    if leading:
        # pairs (x[i], other[i + lag])
        lo = np.maximum(0, -lags)
        hi = np.minimum(n, other_len - lags)
    else:
        # pairs (other[i], x[i + lag])
        lo = np.maximum(0, lags)
        hi = np.minimum(n, other_len + lags)
    hi = np.maximum(hi, lo)
    return c1[hi] - c1[lo], c2[hi] - c2[lo], hi - lo


def estimate_lag(a: np.ndarray, b: np.ndarray, max_lag_s: float = 30.0, rate_hz: int = ENVELOPE_RATE_HZ) -> LagEstimate:
    """
    Lag of b relative to a (positive when b is a delayed copy of a)

    Args:
        a: Reference envelope
        b: Envelope to align
        max_lag_s: Search range in seconds on each side
        rate_hz: Envelope sample rate

    Returns:
        LagEstimate; ties go to the smallest |lag|
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    max_lag = int(round(max_lag_s * rate_hz))

    if a.size <= max_lag or b.size <= max_lag:
        raise EmptyInput(f"envelopes must be longer than the {max_lag}-sample search range", module="alignment")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DegenerateInput("envelopes contain NaN or Inf")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateInput("cannot correlate a zero-variance envelope")

    # Centering keeps the per-lag moment arithmetic well conditioned
    a = a - a.mean()
    b = b - b.mean()

    full = correlate(b, a, mode="full", method="fft")
    lags = np.arange(-max_lag, max_lag + 1)
    s_ab = full[lags + a.size - 1]

    s_a, s_aa, count = _window_sums(a, lags, b.size, leading=True)
    s_b, s_bb, _ = _window_sums(b, lags, a.size, leading=False)

    with np.errstate(invalid="ignore", divide="ignore"):
        m = count.astype(np.float64)
        cov = s_ab - s_a * s_b / m
        var_a = s_aa - s_a * s_a / m
        var_b = s_bb - s_b * s_b / m
        corr = cov / np.sqrt(var_a * var_b)
    valid = (count >= 2) & (var_a > 0) & (var_b > 0)
    corr = np.where(valid, corr, -np.inf)

    peak = corr.max()
    candidates = lags[corr == peak]
    lag = int(min(candidates, key=lambda v: (abs(v), v)))
    peak = float(np.clip(peak, -1.0, 1.0))

    logger.info(f"Estimated lag {lag} samples ({lag / rate_hz:+.3f} s), peak correlation {peak:.3f}")
    return LagEstimate(lag_samples=lag, lag_s=lag / rate_hz, peak_normalized_correlation=peak)
