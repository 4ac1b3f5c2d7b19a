import numpy as np
import pytest

from mslab.fieldio import MAGIC, FieldFormatError, read_field, write_field


def test_roundtrip_real(tmp_path):
    arr = np.arange(12.0).reshape(3, 4)
    p = tmp_path / "f.mslf"
    write_field(p, arr)
    back = read_field(p)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, arr)


def test_roundtrip_complex(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((4, 4, 4)) + 1j * rng.standard_normal((4, 4, 4))
    p = tmp_path / "f.mslf"
    write_field(p, arr)
    np.testing.assert_array_equal(read_field(p), arr)


def test_header_layout(tmp_path):
    p = tmp_path / "f.mslf"
    write_field(p, np.zeros((2, 3)))
    raw = p.read_bytes()
    assert raw[:4] == MAGIC
    assert raw[4:6] == (1).to_bytes(2, "little")  # version
    assert raw[6] == 0  # float64
    assert raw[7] == 2  # ndim
    assert int.from_bytes(raw[8:12], "little") == 2
    assert int.from_bytes(raw[12:16], "little") == 3


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "f.mslf"
    p.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(FieldFormatError):
        read_field(p)


def test_truncated_rejected(tmp_path):
    p = tmp_path / "f.mslf"
    write_field(p, np.ones((4, 4)))
    data = p.read_bytes()
    p.write_bytes(data[:-8])
    with pytest.raises(FieldFormatError):
        read_field(p)


def test_write_is_deterministic(tmp_path):
    arr = np.linspace(0, 1, 16).reshape(4, 4)
    p1, p2 = tmp_path / "a.mslf", tmp_path / "b.mslf"
    write_field(p1, arr)
    write_field(p2, arr)
    assert p1.read_bytes() == p2.read_bytes()
