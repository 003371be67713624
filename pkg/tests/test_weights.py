import struct

import numpy as np
import pytest

from timesup.rng import Rng
from timesup.weights import MAGIC, WeightFormatError, read_tsupw1, write_tsupw1


def test_round_trip_bit_exact_at_f32(tmp_path):
    rng = Rng(1)
    tensors = {
        "wte": rng.normal(12).reshape(4, 3),
        "h.0.ln_1.g": rng.normal(3),
        "scalarish": rng.normal(1).reshape(1),
    }
    path = tmp_path / "w.tsupw"
    write_tsupw1(path, tensors)
    loaded = read_tsupw1(path)
    assert set(loaded) == set(tensors)
    for name, original in tensors.items():
        f32 = original.astype(np.float32).astype(np.float64)
        assert np.array_equal(loaded[name], f32)
        assert loaded[name].dtype == np.float64


def test_write_read_write_is_stable(tmp_path):
    rng = Rng(2)
    tensors = {"a": rng.normal(6).reshape(2, 3), "b": rng.normal(4)}
    p1, p2 = tmp_path / "w1.tsupw", tmp_path / "w2.tsupw"
    write_tsupw1(p1, tensors)
    write_tsupw1(p2, read_tsupw1(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_layout_matches_declared_format(tmp_path):
    path = tmp_path / "w.tsupw"
    write_tsupw1(path, {"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
    blob = path.read_bytes()
    assert blob.startswith(MAGIC)
    pos = len(MAGIC)
    assert struct.unpack_from("<I", blob, pos)[0] == 1
    pos += 4
    assert struct.unpack_from("<H", blob, pos)[0] == 2
    pos += 2
    assert blob[pos:pos + 2] == b"ab"
    pos += 2
    assert blob[pos] == 2  # ndim
    pos += 1
    assert struct.unpack_from("<II", blob, pos) == (1, 2)
    pos += 8
    assert np.frombuffer(blob[pos:], dtype="<f4").tolist() == [1.0, 2.0]


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.tsupw"
    path.write_bytes(b"NOTMAG\n" + b"\x00" * 16)
    with pytest.raises(WeightFormatError, match="magic"):
        read_tsupw1(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "w.tsupw"
    write_tsupw1(path, {"a": np.ones((3, 3))})
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(WeightFormatError, match="truncated"):
        read_tsupw1(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "w.tsupw"
    write_tsupw1(path, {"a": np.ones(2)})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(WeightFormatError, match="trailing"):
        read_tsupw1(path)


def test_duplicate_names_rejected(tmp_path):
    path = tmp_path / "w.tsupw"
    write_tsupw1(path, {"a": np.ones(2)})
    blob = path.read_bytes()
    body = blob[len(MAGIC) + 4:]
    doubled = MAGIC + struct.pack("<I", 2) + body + body
    path.write_bytes(doubled)
    with pytest.raises(WeightFormatError, match="duplicate"):
        read_tsupw1(path)
