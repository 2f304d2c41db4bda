import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from irdiff.tensorio import (
    BadMagicError,
    GiftError,
    TruncatedPayloadError,
    VersionMismatchError,
    read_gift,
    tensor_io_roundtrip,
    write_gift,
    write_pgm,
    write_png,
)


def test_roundtrip_f32_exact(tmp_path):
    arr = np.random.default_rng(0).random((3, 4, 5)).astype(np.float32)
    out = tensor_io_roundtrip(arr, tmp_path / "a.gift")
    np.testing.assert_array_equal(out, arr.astype(np.float64))


def test_roundtrip_f64_exact(tmp_path):
    arr = np.random.default_rng(1).random(100)
    write_gift(arr, tmp_path / "a.gift", dtype="f64")
    np.testing.assert_array_equal(read_gift(tmp_path / "a.gift"), arr)


def test_f32_quantization(tmp_path):
    arr = np.array([1.0 + 1e-12])
    write_gift(arr, tmp_path / "a.gift")  # f32 default
    out = read_gift(tmp_path / "a.gift")
    assert out[0] == np.float64(np.float32(arr[0]))


def test_scalar_becomes_rank1(tmp_path):
    write_gift(np.float64(3.5), tmp_path / "s.gift")
    out = read_gift(tmp_path / "s.gift")
    assert out.shape == (1,) and out[0] == 3.5


def test_header_layout(tmp_path):
    write_gift(np.zeros((2, 3), dtype=np.float32), tmp_path / "h.gift")
    raw = (tmp_path / "h.gift").read_bytes()
    assert raw[:4] == b"GIFT"
    version, code, rank = struct.unpack("<HBB", raw[4:8])
    assert (version, code, rank) == (1, 0, 2)
    assert struct.unpack("<2I", raw[8:16]) == (2, 3)
    assert len(raw) == 16 + 6 * 4


def test_bad_magic(tmp_path):
    p = tmp_path / "x.gift"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(BadMagicError):
        read_gift(p)


def test_bad_version(tmp_path):
    p = tmp_path / "x.gift"
    write_gift(np.zeros(2), p)
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        read_gift(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "x.gift"
    write_gift(np.zeros(8), p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-3])
    with pytest.raises(TruncatedPayloadError):
        read_gift(p)


def test_truncated_header(tmp_path):
    p = tmp_path / "x.gift"
    p.write_bytes(b"GIFT\x01\x00")
    with pytest.raises(TruncatedPayloadError):
        read_gift(p)


def test_unknown_dtype_code(tmp_path):
    p = tmp_path / "x.gift"
    write_gift(np.zeros(2), p)
    raw = bytearray(p.read_bytes())
    raw[6] = 7
    p.write_bytes(bytes(raw))
    with pytest.raises(GiftError):
        read_gift(p)


def test_nonfinite_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_gift(np.array([np.nan]), tmp_path / "x.gift")
    with pytest.raises(ValueError):
        write_gift(np.array([np.inf]), tmp_path / "x.gift")


def test_pgm_output(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    p = tmp_path / "m.pgm"
    write_pgm(img, p)
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    body = raw.split(b"255\n", 1)[1]
    assert len(body) == 12
    assert body[0] == 0 and body[-1] == 255


def test_png_output(tmp_path):
    from PIL import Image

    img = np.linspace(0, 1, 64).reshape(8, 8)
    p = tmp_path / "m.png"
    write_png(img, p)
    with Image.open(p) as im:
        assert im.size == (8, 8)


@settings(max_examples=30, deadline=None)
@given(
    arrays(
        dtype=np.float32,
        shape=array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=6),
        elements=st.floats(-1e6, 1e6, width=32),
    )
)
def test_roundtrip_property(arr):
    import io
    import tempfile

    with tempfile.NamedTemporaryFile(suffix=".gift") as f:
        write_gift(arr, f.name)
        out = read_gift(f.name)
    assert out.shape == arr.shape
    np.testing.assert_array_equal(out, arr.astype(np.float64))
