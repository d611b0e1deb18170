import struct

import numpy as np
import pytest

from nirom.errors import FormatError
from nirom.io import read_indices, read_json, read_romb, write_indices, write_json, write_romb


def test_romb_layout_is_column_major(tmp_path):
    path = tmp_path / "a.romb"
    write_romb(path, np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    data = path.read_bytes()
    assert data[:4] == b"ROMB"
    assert struct.unpack_from("<II", data, 4) == (2, 3)
    assert struct.unpack_from("<6d", data, 12) == (1.0, 4.0, 2.0, 5.0, 3.0, 6.0)


def test_romb_roundtrip(tmp_path, rng):
    a = rng.standard_normal((7, 4))
    write_romb(tmp_path / "a.romb", a)
    assert np.array_equal(read_romb(tmp_path / "a.romb"), a)
    write_romb(tmp_path / "v.romb", a[:, 0])
    assert read_romb(tmp_path / "v.romb").shape == (7, 1)


def test_romb_rejects_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"XXXX" + struct.pack("<II", 1, 1) + b"\0" * 8)
    with pytest.raises(FormatError, match="magic"):
        read_romb(tmp_path / "bad")
    (tmp_path / "short").write_bytes(b"ROMB" + struct.pack("<II", 2, 2) + b"\0" * 8)
    with pytest.raises(FormatError, match="expected"):
        read_romb(tmp_path / "short")
    with pytest.raises(FormatError):
        write_romb(tmp_path / "x", np.zeros((2, 2, 2)))


def test_index_roundtrip(tmp_path):
    write_indices(tmp_path / "i.u32", [5, 0, 17])
    assert read_indices(tmp_path / "i.u32").tolist() == [5, 0, 17]
    write_romb(tmp_path / "m.romb", np.zeros(2))
    with pytest.raises(FormatError):
        read_indices(tmp_path / "m.romb")


def test_json_is_sorted(tmp_path):
    write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    text = (tmp_path / "a.json").read_text()
    assert text.index('"a"') < text.index('"b"')
    assert read_json(tmp_path / "a.json") == {"a": [1, 2], "b": 1}
