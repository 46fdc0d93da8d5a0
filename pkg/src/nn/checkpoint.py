"""
Checkpoint files.

Layout:
    b"APNCKPT1" | u64 little-endian header length | JSON header | float32 LE blobs

The header lists every tensor (name, shape, offset, count), the model's
config snapshot, the rng seed and the run config hash. Offsets count
float32 elements from the start of the blob section.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np

from ..errors import CorruptCheckpoint, MissingCheckpoint, VersionMismatch
from .network import Network, SequentialNetwork

logger = logging.getLogger(__name__)

MAGIC = b"APNCKPT1"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")


@dataclass
class Checkpoint:
    format_version: int
    named_tensors: Dict[str, np.ndarray]
    config_snapshot: dict
    rng_seed: int
    config_hash: str = ""


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    tensors = []
    blobs = []
    offset = 0
    for name in sorted(checkpoint.named_tensors):
        payload = np.ascontiguousarray(checkpoint.named_tensors[name], dtype="<f4")
        tensors.append({"name": name, "shape": list(payload.shape), "offset": offset, "count": int(payload.size)})
        blobs.append(payload.tobytes())
        offset += payload.size

    header = json.dumps(
        {
            "format_version": checkpoint.format_version,
            "tensors": tensors,
            "config_snapshot": checkpoint.config_snapshot,
            "rng_seed": checkpoint.rng_seed,
            "config_hash": checkpoint.config_hash,
        },
        sort_keys=True,
    ).encode("utf-8")
    return MAGIC + _LENGTH.pack(len(header)) + header + b"".join(blobs)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parse checkpoint bytes

    Raises:
        CorruptCheckpoint: Bad magic, unreadable header or truncated payload
        VersionMismatch: Header written by another format version
    """
    if not data.startswith(MAGIC):
        raise CorruptCheckpoint("missing APNCKPT1 magic")
    start = len(MAGIC) + _LENGTH.size
    if len(data) < start:
        raise CorruptCheckpoint("file ends inside the header length field")
    (header_len,) = _LENGTH.unpack_from(data, len(MAGIC))
    if len(data) < start + header_len:
        raise CorruptCheckpoint("file ends inside the header")

    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        version = header["format_version"]
        entries = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CorruptCheckpoint(f"unreadable header: {e}")

    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")

    blob = memoryview(data)[start + header_len:]
    available = len(blob) // 4
    tensors = {}
    for entry in entries:
        name, shape, offset, count = entry["name"], tuple(entry["shape"]), entry["offset"], entry["count"]
        if int(np.prod(shape, dtype=np.int64)) != count:
            raise CorruptCheckpoint(f"{name}: shape {shape} does not hold {count} values")
        if offset < 0 or offset + count > available:
            raise CorruptCheckpoint(f"{name}: payload truncated")
        values = np.frombuffer(blob, dtype="<f4", count=count, offset=offset * 4)
        tensors[name] = values.reshape(shape).copy()

    return Checkpoint(
        format_version=version,
        named_tensors=tensors,
        config_snapshot=header.get("config_snapshot", {}),
        rng_seed=int(header.get("rng_seed", 0)),
        config_hash=header.get("config_hash", ""),
    )


def checkpoint_of(model: Network, config_hash: str = "") -> Checkpoint:
    return Checkpoint(
        format_version=FORMAT_VERSION,
        named_tensors=model.state_dict(),
        config_snapshot=model.config_snapshot(),
        rng_seed=model.seed,
        config_hash=config_hash,
    )


def save_checkpoint(model: Network, path: Union[str, Path], config_hash: str = "") -> Path:
    """
    Write model weights, buffers and architecture to path

    The model is quantized to the float32 payload precision first, so it
    keeps producing exactly what a reload of the file produces.
    """
    model.quantize()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint_of(model, config_hash)))
    os.replace(tmp, path)
    logger.info(f"✅ Saved {model.kind} checkpoint ({model.parameter_count()} parameters) to {path}")
    return path


def read_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"checkpoint not found: {path}", module="nn-core")
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CorruptCheckpoint(f"cannot read {path}: {e}")
    return decode_checkpoint(data)


ModelBuilder = Callable[[dict, int], Network]


def load_checkpoint(path: Union[str, Path], builder: Optional[ModelBuilder] = None) -> Network:
    """
    Rebuild a model from its checkpoint

    Args:
        path: Checkpoint file
        builder: Maps (config_snapshot, seed) to an untrained model; defaults to
            SequentialNetwork for "sequential" snapshots

    Returns:
        Model in eval-ready state with the stored tensors loaded
    """
    checkpoint = read_checkpoint(path)
    if builder is None:
        if checkpoint.config_snapshot.get("kind") != SequentialNetwork.kind:
            raise CorruptCheckpoint(f"no builder for model kind {checkpoint.config_snapshot.get('kind')!r}")
        builder = SequentialNetwork.from_snapshot
    model = builder(checkpoint.config_snapshot, checkpoint.rng_seed)
    model.load_state_dict(checkpoint.named_tensors)
    logger.info(f"Loaded {model.kind} checkpoint from {path}")
    return model
