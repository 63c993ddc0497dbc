"""TTPT1 tensor archive: the on-disk format shared by every CLI stage.

Layout: magic bytes ``TTPT``, one version byte (0x01), then records until
end of file.  Each record is

    name length   uint16, little-endian
    name          UTF-8 bytes
    rank          uint8
    dims          rank * uint32, little-endian
    payload       row-major little-endian float32 values

Records keep their write order.  String metadata rides along as a rank-1
tensor of UTF-8 byte values (0..255 are exact in float32); see
``text_record`` / ``record_text``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IoError

__all__ = [
    "MAGIC",
    "VERSION",
    "read_archive",
    "record_text",
    "text_record",
    "write_archive",
]

MAGIC = b"TTPT"
VERSION = 1


def text_record(value: str) -> np.ndarray:
    """Encode a string as a float tensor storable in an archive."""
    data = value.encode("utf-8")
    return np.frombuffer(data, dtype=np.uint8).astype(np.float64)


def record_text(arr: np.ndarray) -> str:
    """Decode a tensor written by :func:`text_record`."""
    flat = np.asarray(arr).ravel()
    return bytes(int(round(x)) for x in flat).decode("utf-8")


def write_archive(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors in insertion order.  Deterministic byte output."""
    chunks = [MAGIC, bytes([VERSION])]
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        if arr.ndim == 0:
            arr = arr.reshape(1)
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise IoError(f"record name too long: {len(name_bytes)} bytes")
        if arr.ndim > 0xFF:
            raise IoError(f"record rank too large: {arr.ndim}")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write archive {path}: {exc}") from exc


def read_archive(path) -> dict[str, np.ndarray]:
    """Read an archive back as float64 arrays, preserving record order."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read archive {path}: {exc}") from exc
    if len(blob) < 5 or blob[:4] != MAGIC:
        raise IoError(f"{path}: not a TTPT archive")
    if blob[4] != VERSION:
        raise IoError(f"{path}: unsupported archive version {blob[4]}")
    pos = 5
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise IoError(f"{path}: truncated archive")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * count)
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)
        if name in out:
            raise IoError(f"{path}: duplicate record {name!r}")
        out[name] = arr
    return out
