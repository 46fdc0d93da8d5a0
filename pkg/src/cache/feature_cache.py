"""
On-disk log-Mel feature cache (LMEL1 files)
"""
import hashlib
import logging
import os
import re
from pathlib import Path
from typing import Optional

import numpy as np

from ..config.config import settings

logger = logging.getLogger(__name__)

LMEL_MAGIC = "LMEL1"


def encode_features(values: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(values, dtype="<f4")
    frames, bins = payload.shape
    return f"{LMEL_MAGIC} {frames} {bins}\n".encode("ascii") + payload.tobytes()


def decode_features(data: bytes) -> Optional[np.ndarray]:
    """Features from LMEL1 bytes, or None when the blob is damaged"""
    newline = data.find(b"\n", 0, 64)
    if newline < 0:
        return None
    try:
        magic, frames, bins = data[:newline].decode("ascii").split()
        frames, bins = int(frames), int(bins)
    except (UnicodeDecodeError, ValueError):
        return None
    start = newline + 1
    if magic != LMEL_MAGIC or frames < 0 or bins < 0 or len(data) != start + 4 * frames * bins:
        return None
    return np.frombuffer(data, dtype="<f4", offset=start).reshape(frames, bins).copy()


class FeatureCache:
    """File cache for per-segment log-Mel maps"""

    def __init__(self):
        self.root: Optional[Path] = None
        self._initialized = False

    def initialize(self, cache_dir: Optional[str] = None):
        """Create the cache directory (settings.CACHE_DIR unless given)"""
        root = Path(cache_dir or settings.CACHE_DIR)
        try:
            root.mkdir(parents=True, exist_ok=True)
            self.root = root
            self._initialized = True
            logger.info(f"Feature cache ready at {root}")
        except OSError as e:
            self._initialized = False
            logger.warning(f"Feature cache disabled, cannot create {root}: {e}")

    @property
    def enabled(self) -> bool:
        return self._initialized

    def key(self, night_id: str, start_s: float, feature_digest: str, source: str = "") -> str:
        """Night, segment start in ms, and a digest of the feature config plus the audio source tag"""
        safe_night = re.sub(r"[^A-Za-z0-9_.-]", "_", night_id)
        tag = hashlib.sha256(f"{feature_digest}|{source}".encode()).hexdigest()[:16]
        return f"{safe_night}_{int(round(start_s * 1000))}_{tag}"

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.lmel"

    def get(self, key: str) -> Optional[np.ndarray]:
        if not self._initialized:
            return None
        path = self._path(key)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as e:
            logger.warning(f"Error reading cached features {key}: {e}")
            return None

        values = decode_features(data)
        if values is None:
            logger.warning(f"Discarding damaged cache entry {key}")
            self.invalidate(key)
        return values

    def set(self, key: str, values: np.ndarray):
        if not self._initialized:
            return
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_bytes(encode_features(values))
            os.replace(tmp, path)
        except OSError as e:
            logger.warning(f"Error caching features {key}: {e}")

    def invalidate(self, key: str):
        if not self._initialized:
            return
        try:
            self._path(key).unlink()
        except FileNotFoundError:
            pass
        except OSError as e:
            logger.warning(f"Error invalidating cache entry {key}: {e}")

    def clear(self) -> int:
        """Remove every cached map; returns the number of files removed"""
        if not self._initialized:
            return 0
        removed = 0
        for path in self.root.glob("*.lmel"):
            try:
                path.unlink()
                removed += 1
            except OSError as e:
                logger.warning(f"Error removing {path}: {e}")
        return removed


# Global feature cache instance
feature_cache = FeatureCache()


def init_cache(cache_dir: Optional[str] = None):
    """Initialize the feature cache (call once per command)"""
    feature_cache.initialize(cache_dir)
