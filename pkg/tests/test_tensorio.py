import numpy as np
import pytest

from resad.errors import VersionMismatch
from resad.tensorio import load_tensor, save_tensor


def test_round_trip_f32(tmp_path):
    arr = np.random.default_rng(0).standard_normal((5, 7, 3)).astype(np.float32)
    path = tmp_path / "t.rsft"
    save_tensor(path, arr)
    back = load_tensor(path)
    assert back.dtype == np.float32
    assert np.array_equal(back.view(np.uint32), arr.view(np.uint32))  # bit-exact


def test_round_trip_i64(tmp_path):
    arr = np.arange(12, dtype=np.int64).reshape(3, 4)
    path = tmp_path / "t.rsft"
    save_tensor(path, arr)
    assert np.array_equal(load_tensor(path), arr)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.rsft"
    save_tensor(path, np.zeros((4, 4), dtype=np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(VersionMismatch):
        load_tensor(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "t.rsft"
    path.write_bytes(b"RS")
    with pytest.raises(VersionMismatch):
        load_tensor(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "t.rsft"
    save_tensor(path, np.zeros(3, dtype=np.float32))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_tensor(path)


def test_unknown_version(tmp_path):
    path = tmp_path / "t.rsft"
    save_tensor(path, np.zeros(3, dtype=np.float32))
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_tensor(path)


def test_rejects_unsupported_dtype(tmp_path):
    with pytest.raises(ValueError):
        save_tensor(tmp_path / "t.rsft", np.zeros(3, dtype=np.float16))
