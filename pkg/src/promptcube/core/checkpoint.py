"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      4 bytes   b"PCKP"
    version    u8        1
    count      u32       number of entries
    entries    count times:
        name_len  u16
        name      name_len bytes, UTF-8
        ndim      u8
        dims      ndim x u32
        payload   prod(dims) x float64, little-endian, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    try:
        return _parse(blob, path)
    except (struct.error, UnicodeDecodeError) as err:
        raise CheckpointError(f"{path}: truncated or corrupt ({err})") from None


def _parse(blob: bytes, path) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<BI", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        if pos + 8 * n > len(blob):
            raise CheckpointError(f"{path}: payload of {name!r} is truncated")
        payload = np.frombuffer(blob, dtype="<f8", count=n, offset=pos)
        pos += 8 * n
        out[name] = payload.astype(np.float64).reshape(dims)
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return out
