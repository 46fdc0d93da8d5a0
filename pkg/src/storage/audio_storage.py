"""
Wave file I/O for night recordings
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.io import wavfile

from ..dsp.features import AudioNight
from ..errors import EmptyInput, StorageError, UnsupportedSampleRate

logger = logging.getLogger(__name__)

INT_SCALES = {
    np.dtype("int16"): 32768.0,
    np.dtype("int32"): 2147483648.0,
}


def read_wave(
    path: Union[str, Path],
    expected_rate: Optional[int] = None,
    subject_id: str = "",
    night_id: str = "",
    total_sleep_time_h: Optional[float] = None,
) -> AudioNight:
    """
    Load a mono wave file as an AudioNight

    Args:
        path: .wav file
        expected_rate: Required sample rate, or None to accept any
        subject_id: Subject identifier
        night_id: Night identifier (defaults to the file stem)
        total_sleep_time_h: Optional sleep-time metadata

    Returns:
        AudioNight with float samples in [-1, 1]
    """
    path = Path(path)
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as e:
        raise StorageError(f"cannot read wave file {path}: {e}")
    if data.ndim != 1:
        raise UnsupportedSampleRate(f"{path.name}: expected mono audio, got {data.shape[1]} channels")
    if expected_rate is not None and rate != expected_rate:
        raise UnsupportedSampleRate(f"{path.name}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if data.size == 0:
        raise EmptyInput(f"{path.name} holds no samples", module="storage")

    if data.dtype in INT_SCALES:
        samples = data.astype(np.float32) / INT_SCALES[data.dtype]
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float32) - 128.0) / 128.0
    else:
        samples = data.astype(np.float32)

    logger.debug(f"Read {path.name}: {samples.size} samples at {rate} Hz")
    return AudioNight(
        samples=samples,
        sample_rate_hz=int(rate),
        subject_id=subject_id,
        night_id=night_id or path.stem,
        total_sleep_time_h=total_sleep_time_h,
    )


def write_wave(path: Union[str, Path], samples: np.ndarray, sample_rate_hz: int) -> Path:
    """Write mono float32 PCM"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(sample_rate_hz), np.asarray(samples, dtype=np.float32))
    return path
