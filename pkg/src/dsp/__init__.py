"""
Signal processing module initialization
"""
from .features import AudioNight, LogMelSegment, SegmentIndex, featurize_segment, log_mel, segment_night
from .alignment import LagEstimate, downsample_envelope, estimate_lag

__all__ = [
    'AudioNight',
    'LogMelSegment',
    'SegmentIndex',
    'featurize_segment',
    'log_mel',
    'segment_night',
    'LagEstimate',
    'downsample_envelope',
    'estimate_lag'
]
