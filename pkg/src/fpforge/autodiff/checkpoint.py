"""Checkpoint file format.

Layout: magic ``FPFORGE1`` + UTF-8 JSON header + single NUL byte +
concatenated little-endian float32 blobs. The header lists each
parameter's name, shape, dtype, and byte offset into the blob region.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"FPFORGE1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, Tensor | np.ndarray]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, p in params.items():
        arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "f32",
            "offset": offset,
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"params": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(b"\x00")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: missing {MAGIC.decode()} magic")
    body = raw[len(MAGIC):]
    sep = body.find(b"\x00")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header separator")
    header = json.loads(body[:sep].decode("utf-8"))
    blob = body[sep + 1:]
    out: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).astype(np.float32)
    return out


def params_checksum(params: dict[str, Tensor | np.ndarray]) -> str:
    """Order-independent digest of parameter names and values."""
    h = hashlib.sha256()
    for name in sorted(params):
        p = params[name]
        arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()
