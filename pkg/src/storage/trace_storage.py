"""
Effort trace files (EFF32) and event label files.

EFF32:  b"EFF32 <n_points>\n" followed by n_points little-endian float32
Labels: one "start_s,end_s" pair per line; blank lines and "#" comments ignored
"""
import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from ..errors import InvalidValue, ShapeMismatch, StorageError
from ..scoring.events import SdbEvent

logger = logging.getLogger(__name__)

EFFORT_MAGIC = "EFF32"


def _read(path: Path, binary: bool = False):
    try:
        return path.read_bytes() if binary else path.read_text()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}")


def write_effort_trace(path: Union[str, Path], values: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(values, dtype="<f4")
    if payload.ndim != 1:
        raise ShapeMismatch(f"effort traces are 1-D, got {payload.shape}")
    with open(path, "wb") as f:
        f.write(f"{EFFORT_MAGIC} {payload.size}\n".encode("ascii"))
        f.write(payload.tobytes())
    return path


def read_effort_trace(path: Union[str, Path]) -> np.ndarray:
    """
    Read an EFF32 file

    Raises:
        ShapeMismatch: Malformed header or a payload shorter than announced
    """
    path = Path(path)
    data = _read(path, binary=True)
    newline = data.find(b"\n")
    if newline < 0:
        raise ShapeMismatch(f"{path.name}: missing EFF32 header", module="storage")
    try:
        magic, count = data[:newline].decode("ascii").split()
        count = int(count)
    except (UnicodeDecodeError, ValueError):
        raise ShapeMismatch(f"{path.name}: malformed EFF32 header", module="storage")
    if magic != EFFORT_MAGIC or count < 0:
        raise ShapeMismatch(f"{path.name}: malformed EFF32 header", module="storage")

    payload = data[newline + 1:]
    if len(payload) < 4 * count:
        raise ShapeMismatch(
            f"{path.name}: header announces {count} points, payload holds {len(payload) // 4}",
            module="storage",
        )
    return np.frombuffer(payload, dtype="<f4", count=count).astype(np.float64)


def write_labels(path: Union[str, Path], events: Sequence[SdbEvent]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# start_s,end_s"] + [f"{e.start_s:.3f},{e.end_s:.3f}" for e in events]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_labels(path: Union[str, Path]) -> List[SdbEvent]:
    """Reference events sorted by start"""
    path = Path(path)
    events = []
    for lineno, line in enumerate(_read(path).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            start, end = (float(v) for v in line.split(","))
        except ValueError:
            raise InvalidValue(f"{path.name}:{lineno}: expected 'start_s,end_s', got {line!r}", module="storage")
        if not end > start:
            raise InvalidValue(f"{path.name}:{lineno}: event ends before it starts ({line})", module="storage")
        events.append(SdbEvent(start_s=start, end_s=end, source="reference"))
    return sorted(events, key=lambda e: e.start_s)
