"""Reader and writer for the ECTF tensor container format.

Layout (all integers little-endian u32): magic bytes ``ECTF``, version
(=1), entry count; then per entry: name length, UTF-8 name, height, width,
channels, and height*width*channels float32 values in row-major
(row, col, channel) order. Entry order is preserved.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"ECTF"
VERSION = 1

_U32 = struct.Struct("<I")


def _read_u32(fh: BinaryIO) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError("truncated ECTF stream")
    return _U32.unpack(raw)[0]


def write_entries(fh: BinaryIO, entries: dict[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(_U32.pack(VERSION))
    fh.write(_U32.pack(len(entries)))
    for name, arr in entries.items():
        if arr.ndim != 3:
            raise ValueError(f"entry {name!r} must have shape (h, w, c), got {arr.shape}")
        data = np.ascontiguousarray(arr, np.float32)
        if not np.isfinite(data).all():
            raise ValueError(f"entry {name!r} contains non-finite values")
        raw_name = name.encode("utf-8")
        fh.write(_U32.pack(len(raw_name)))
        fh.write(raw_name)
        h, w, c = data.shape
        fh.write(_U32.pack(h))
        fh.write(_U32.pack(w))
        fh.write(_U32.pack(c))
        fh.write(data.tobytes())


def read_entries(fh: BinaryIO) -> dict[str, np.ndarray]:
    if fh.read(4) != MAGIC:
        raise ValueError("not an ECTF stream (bad magic)")
    version = _read_u32(fh)
    if version != VERSION:
        raise ValueError(f"unsupported ECTF version {version}")
    count = _read_u32(fh)
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = _read_u32(fh)
        raw_name = fh.read(name_len)
        if len(raw_name) != name_len:
            raise ValueError("truncated ECTF stream")
        name = raw_name.decode("utf-8")
        h = _read_u32(fh)
        w = _read_u32(fh)
        c = _read_u32(fh)
        nbytes = h * w * c * 4
        raw = fh.read(nbytes)
        if len(raw) != nbytes:
            raise ValueError("truncated ECTF stream")
        arr = np.frombuffer(raw, "<f4").reshape(h, w, c)
        if not np.isfinite(arr).all():
            raise ValueError(f"entry {name!r} contains non-finite values")
        entries[name] = arr.copy()
    return entries


def save(path, entries: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        write_entries(fh, entries)


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_entries(fh)


def to_bytes(entries: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    write_entries(buf, entries)
    return buf.getvalue()


def from_bytes(blob: bytes) -> dict[str, np.ndarray]:
    return read_entries(io.BytesIO(blob))
