"""Binary checkpoints: b"WFLW", u32 version, u32 metadata length, UTF-8 JSON metadata,
u64 element count, little-endian f64 payload."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingArtifactError

MAGIC = b"WFLW"
VERSION = 1


def encode(payload: np.ndarray, meta: dict) -> bytes:
    payload = np.ascontiguousarray(np.asarray(payload, dtype="<f8").ravel())
    size = meta.get("payload_size")
    if size is not None and size != payload.size:
        raise ConfigError(f"payload has {payload.size} values, metadata declares {size}")
    head = json.dumps({**meta, "payload_size": int(payload.size)}, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    return (MAGIC + struct.pack("<II", VERSION, len(head)) + head
            + struct.pack("<Q", payload.size) + payload.tobytes())


def decode(blob: bytes) -> tuple[np.ndarray, dict]:
    if blob[:4] != MAGIC:
        raise ConfigError("not a WeightFlow checkpoint (bad magic)")
    version, n_head = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    meta = json.loads(blob[12:12 + n_head].decode("utf-8"))
    (count,) = struct.unpack_from("<Q", blob, 12 + n_head)
    start = 20 + n_head
    if len(blob) != start + 8 * count:
        raise ConfigError(f"truncated checkpoint: expected {count} values")
    if meta.get("payload_size") != count:
        raise ConfigError("payload length does not match the metadata")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=start).astype(np.float64), meta


def save(path: str | Path, payload: np.ndarray, meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(payload, meta))


def load(path: str | Path, stage: str | None = None) -> tuple[np.ndarray, dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"checkpoint {path} not found")
    payload, meta = decode(path.read_bytes())
    if stage is not None and meta.get("stage") != stage:
        raise ConfigError(f"{path} holds stage {meta.get('stage')!r}, expected {stage!r}")
    return payload, meta
