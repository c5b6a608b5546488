"""Binary array container used for checkpoints and token dumps.

Layout (all integers little-endian):

    magic        4 bytes  "P3PC"
    version      u32      currently 1
    table count  u64      number of named arrays
    per array:
        name length u32, name UTF-8 bytes
        rank u32, dims rank x u64
        data: prod(dims) float64 values, little-endian, C order

Arrays are written sorted by name so identical contents always produce
identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError

MAGIC = b"P3PC"
VERSION = 1


def write_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays; keys are sorted for byte stability."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<Q", len(arrays))
    for name in sorted(arrays):
        data = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += struct.pack("<I", data.ndim)
        out += struct.pack(f"<{data.ndim}Q", *data.shape)
        out += data.tobytes()
    Path(path).write_bytes(bytes(out))


def read_arrays(path) -> dict[str, np.ndarray]:
    """Read a container written by write_arrays."""
    blob = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(path, pos, f"truncated while reading {what}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(path, 0, f"bad magic, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(path, 4, f"unsupported version {version}")
    (count,) = struct.unpack("<Q", take(8, "array count"))

    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = take(8 * n_values, f"data of {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    if pos != len(blob):
        raise FormatError(path, pos, "trailing bytes after last array")
    return arrays
