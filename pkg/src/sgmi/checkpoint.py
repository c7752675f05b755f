"""Binary container for named float64 arrays.

Layout: magic bytes b"SGMI", a little-endian int64 format version, then a
sequence of records until EOF. Each record is: int64 name byte-length, the
UTF-8 name, int64 rank, rank int64 dims, then the values as little-endian
float64 in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SGMI"
VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or wrong-format checkpoint file."""


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<q", VERSION))
        for name, arr in arrays.items():
            a = np.asarray(arr, dtype="<f8")
            if a.ndim and not a.flags.c_contiguous:
                a = np.ascontiguousarray(a)
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<q", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<q", a.ndim))
            if a.ndim:
                f.write(struct.pack(f"<{a.ndim}q", *a.shape))
            f.write(a.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint file not found: {path}")
    arrays: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic bytes in {path}: {magic!r}")
        (version,) = struct.unpack("<q", _read_exact(f, 8, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
        while True:
            head = f.read(8)
            if not head:
                break
            if len(head) != 8:
                raise CheckpointError("truncated checkpoint while reading record header")
            (name_len,) = struct.unpack("<q", head)
            if name_len < 0:
                raise CheckpointError("corrupt checkpoint: negative name length")
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<q", _read_exact(f, 8, "rank"))
            if rank < 0:
                raise CheckpointError("corrupt checkpoint: negative rank")
            dims = struct.unpack(f"<{rank}q", _read_exact(f, 8 * rank, "dims")) if rank else ()
            count = 1
            for d in dims:
                if d < 0:
                    raise CheckpointError("corrupt checkpoint: negative dimension")
                count *= d
            raw = _read_exact(f, 8 * count, f"values of {name!r}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
    return arrays
