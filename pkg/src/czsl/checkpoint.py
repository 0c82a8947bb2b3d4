"""Binary parameter checkpoints.

Layout (all integers little-endian):
  8 bytes   magic "CZSLCKP1"
  uint32    tensor count
  per tensor, in sorted name order:
    uint32      name byte length, then that many UTF-8 bytes
    uint32      rank
    uint64[]    one size per axis
    float64[]   row-major values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ModelError

MAGIC = b"CZSLCKP1"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise ModelError(f"missing checkpoint: {path}")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise ModelError(f"{path}: bad magic (not a checkpoint, or unsupported version)")
    offset = 8

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise ModelError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (count,) = take("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = take("<I")
        shape = take(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).copy()
        offset += 8 * n
        params[name] = values.reshape(shape)
    if offset != len(blob):
        raise ModelError(f"{path}: trailing bytes after last tensor")
    return params


def apply_params(target: dict[str, np.ndarray], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded tensors into the live parameter dict, checking shapes."""
    missing = set(target) - set(loaded)
    extra = set(loaded) - set(target)
    if missing or extra:
        raise ModelError(
            f"checkpoint/model mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
        )
    for name, arr in target.items():
        if loaded[name].shape != arr.shape:
            raise ModelError(
                f"checkpoint tensor {name} has shape {loaded[name].shape}, model needs {arr.shape}"
            )
        arr[...] = loaded[name]
