"""
Batch assembly shared by both model families.
"""
from typing import Sequence, Union

import numpy as np

from ..dsp.features import LogMelSegment
from ..errors import ShapeMismatch

SegmentLike = Union[LogMelSegment, np.ndarray]

STD_FLOOR = 1e-8


def standardize(values: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance copy of one log-Mel map"""
    values = np.asarray(values, dtype=np.float64)
    std = values.std()
    return (values - values.mean()) / (std if std > STD_FLOOR else 1.0)


def stack_segments(segments: Sequence[SegmentLike], frames: int, mel_bins: int) -> np.ndarray:
    """
    Standardise and stack segments into a (B, frames, mel_bins) batch

    Raises:
        ShapeMismatch: A segment has a different time/frequency extent
    """
    batch = np.empty((len(segments), frames, mel_bins))
    for i, seg in enumerate(segments):
        values = seg.values if isinstance(seg, LogMelSegment) else np.asarray(seg)
        if values.shape != (frames, mel_bins):
            raise ShapeMismatch(f"segment {i} has shape {values.shape}, model expects {(frames, mel_bins)}")
        batch[i] = standardize(values)
    return batch
