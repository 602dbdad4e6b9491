"""Flat binary parameter container.

Layout: the 5-byte magic ``TSCB1`` followed by one record per tensor until
end of file.  A record is ``uint32`` name length, the UTF-8 name, ``uint32``
rank, ``rank`` x ``uint64`` dims, then ``prod(dims)`` little-endian float64
values in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"TSCB1"


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC]
    for name, value in tensors.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype="<f8"))
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a TSCB1 checkpoint (bad magic)")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            if pos + 8 * count > len(blob):
                raise CheckpointError(f"record {name!r} truncated")
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos) \
                .astype(np.float64).reshape(dims)
            pos += 8 * count
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return out


def save(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())


def with_prefix(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    return {prefix + k: v for k, v in tensors.items()}


def strip_prefix(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    if not any(k.startswith(prefix) for k in tensors):
        raise CheckpointError(f"checkpoint has no tensors with prefix {prefix!r}")
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
