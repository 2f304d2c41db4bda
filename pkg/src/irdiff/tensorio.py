"""Bit-exact tensor file format plus PGM/PNG export of 2-D maps.

The ``.gift`` container stores one dense row-major tensor:

    magic   4 bytes  b"GIFT"
    version u16 LE   currently 1
    dtype   u8       0 = float32, 1 = float64 (checkpoints only)
    rank    u8
    shape   rank * u32 LE
    payload row-major, little-endian

Maps and features are serialized as f32; training checkpoints use the f64
dtype code so optimizer state survives a resume bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GIFT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class GiftError(Exception):
    """Base error for .gift container problems."""


class BadMagicError(GiftError):
    pass


class VersionMismatchError(GiftError):
    pass


class TruncatedPayloadError(GiftError):
    pass


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


def write_gift(arr: np.ndarray, path, dtype: str = "f32") -> None:
    arr = np.asarray(arr)
    check_finite(arr)
    code = 0 if dtype == "f32" else 1
    out = arr.astype(_DTYPES[code], copy=False)
    shape = arr.shape if arr.ndim > 0 else (1,)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HBB", VERSION, code, len(shape)))
        f.write(struct.pack(f"<{len(shape)}I", *shape))
        f.write(np.ascontiguousarray(out.reshape(shape)).tobytes())


def read_gift(path) -> np.ndarray:
    """Read a .gift tensor; always returns float64 for compute."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a GIFT file")
    if len(raw) < 8:
        raise TruncatedPayloadError(f"{path}: truncated header")
    version, code, rank = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if code not in _DTYPES:
        raise GiftError(f"{path}: unknown dtype code {code}")
    header_end = 8 + 4 * rank
    if len(raw) < header_end:
        raise TruncatedPayloadError(f"{path}: truncated shape header")
    shape = struct.unpack(f"<{rank}I", raw[8:header_end])
    dt = _DTYPES[code]
    expected = int(np.prod(shape)) * dt.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=dt).reshape(shape).astype(np.float64)


def tensor_io_roundtrip(arr: np.ndarray, path) -> np.ndarray:
    """Write then read back; values equal after f32 quantization."""
    write_gift(arr, path)
    return read_gift(path)


def _to_u8(img: np.ndarray) -> np.ndarray:
    """Min-max scale a 2-D map into uint8 for visualization."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D map")
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.zeros_like(img)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_pgm(img: np.ndarray, path) -> None:
    u8 = _to_u8(img)
    h, w = u8.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


def write_png(img: np.ndarray, path) -> None:
    from PIL import Image

    u8 = np.asarray(img, dtype=np.uint8) if np.asarray(img).dtype == np.uint8 else _to_u8(img)
    Image.fromarray(u8).save(path, format="PNG")


def write_png_rgb(img: np.ndarray, path) -> None:
    """img: HxWx3 uint8."""
    from PIL import Image

    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="RGB").save(path, format="PNG")
