"""
Audio frontend: night segmentation and log-Mel spectrogram extraction.

All functions are pure; segments can be featurised in parallel.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from ..errors import EmptyInput, InvalidValue, NightTooShort, NonFiniteSample, UnsupportedSampleRate
from ..scoring.events import SdbEvent

logger = logging.getLogger(__name__)


@dataclass
class AudioNight:
    """One night of mono audio plus metadata"""
    samples: np.ndarray
    sample_rate_hz: int
    subject_id: str
    night_id: str
    total_sleep_time_h: Optional[float] = None
    events: Optional[List[SdbEvent]] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.sample_rate_hz <= 0:
            raise UnsupportedSampleRate(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise EmptyInput(f"night {self.night_id} has no mono samples")
        if self.total_sleep_time_h is not None:
            if not 0 < self.total_sleep_time_h <= self.duration_s / 3600.0:
                raise InvalidValue(
                    f"night {self.night_id}: total sleep time {self.total_sleep_time_h} h outside (0, recorded duration]",
                    module="dsp-features",
                )

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class SegmentIndex:
    start_s: float
    duration_s: float = 30.0
    shift_s: float = 10.0

    def __post_init__(self):
        if self.start_s < 0 or self.duration_s <= 0 or self.shift_s <= 0:
            raise InvalidValue(f"invalid segment index {self}", module="dsp-features")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass
class LogMelSegment:
    values: np.ndarray
    segment: SegmentIndex
    frame_shift_ms: float = 20.0
    window_ms: float = 50.0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def segment_count(night_duration_s: float, duration_s: float, shift_s: float) -> int:
    if night_duration_s < duration_s:
        return 0
    return int(math.floor((night_duration_s - duration_s) / shift_s + 1e-9)) + 1


def segment_night(
    night: AudioNight,
    duration_s: float = 30.0,
    shift_s: float = 10.0,
) -> List[Tuple[SegmentIndex, np.ndarray]]:
    """
    Cut a night into overlapping windows

    Args:
        night: Audio night
        duration_s: Window length in seconds
        shift_s: Hop between window starts in seconds

    Returns:
        List of (SegmentIndex, sample view); the trailing partial window is dropped
    """
    if night.duration_s < duration_s:
        raise NightTooShort(
            f"night {night.night_id} lasts {night.duration_s:.1f} s, shorter than one {duration_s} s window"
        )

    rate = night.sample_rate_hz
    seg_len = int(round(duration_s * rate))
    hop = int(round(shift_s * rate))
    count = (night.samples.size - seg_len) // hop + 1

    segments = []
    for i in range(count):
        start = i * hop
        index = SegmentIndex(start_s=start / rate, duration_s=duration_s, shift_s=shift_s)
        segments.append((index, night.samples[start:start + seg_len]))
    return segments


def hz_to_mel(freq_hz):
    """HTK mel scale"""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(mel_bins: int, sample_rate_hz: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter spanning 0 Hz to Nyquist"""
    points = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), mel_bins + 2)
    return mel_to_hz(points[1:-1])


@lru_cache(maxsize=8)
def mel_filterbank(mel_bins: int, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    """Returns [mel_bins, n_fft // 2 + 1] triangular filters with unit peak."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate_hz)
    hz_points = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), mel_bins + 2))

    bank = np.zeros((mel_bins, freqs.size))
    for m in range(mel_bins):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    bank.setflags(write=False)
    return bank


@lru_cache(maxsize=8)
def _hann(n: int) -> np.ndarray:
    window = get_window("hann", n)
    window.setflags(write=False)
    return window


def frame_count(n_samples: int, hop: int) -> int:
    return int(math.ceil(n_samples / hop))


def log_mel(
    samples: np.ndarray,
    sample_rate_hz: int = 16000,
    window_ms: float = 50.0,
    shift_ms: float = 20.0,
    mel_bins: int = 64,
    n_fft: int = 1024,
    log_floor: float = 1e-10,
    segment: Optional[SegmentIndex] = None,
) -> LogMelSegment:
    """
    Hann-windowed power spectra -> triangular Mel filterbank -> natural log.

    The signal is center-padded by half a window on each side (reflected) and
    ceil(n / hop) frames are kept, so 30 s at 16 kHz yields exactly 1500 x 64.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("log_mel needs a non-empty mono sample slice")
    if not np.all(np.isfinite(x)):
        raise NonFiniteSample("audio slice contains NaN or Inf samples")

    win = int(round(window_ms * sample_rate_hz / 1000.0))
    hop = int(round(shift_ms * sample_rate_hz / 1000.0))
    if win > n_fft:
        raise EmptyInput(f"window of {win} samples exceeds n_fft={n_fft}")

    pad = win // 2
    mode = "reflect" if x.size > pad else "constant"
    padded = np.pad(x, (pad, pad), mode=mode)

    n_frames = frame_count(x.size, hop)
    frames = sliding_window_view(padded, win)[::hop][:n_frames]
    spectrum = np.fft.rfft(frames * _hann(win), n=n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2

    mel_energy = power @ mel_filterbank(mel_bins, n_fft, sample_rate_hz).T
    values = np.log(np.maximum(mel_energy, log_floor))

    if segment is None:
        segment = SegmentIndex(start_s=0.0, duration_s=x.size / sample_rate_hz)
    return LogMelSegment(values=values, segment=segment, frame_shift_ms=shift_ms, window_ms=window_ms)


def featurize_segment(index: SegmentIndex, samples: np.ndarray, sample_rate_hz: int, config) -> LogMelSegment:
    """log_mel driven by a FeatureConfig"""
    return log_mel(
        samples,
        sample_rate_hz=sample_rate_hz,
        window_ms=config.window_ms,
        shift_ms=config.shift_ms,
        mel_bins=config.mel_bins,
        n_fft=config.n_fft,
        log_floor=config.log_floor,
        segment=index,
    )
