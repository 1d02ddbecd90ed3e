import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from diststat.distmat.io import (
    FormatError,
    dumps_dstm,
    loads_dstm,
    read_matrix,
    write_matrix,
)


@given(hnp.arrays(st.sampled_from([np.float64, np.float32]),
                  hnp.array_shapes(min_dims=2, max_dims=2, max_side=6)))
def test_dstm_roundtrip(m):
    back = loads_dstm(dumps_dstm(m))
    assert back.dtype == m.dtype and back.shape == m.shape
    assert back.tobytes() == np.ascontiguousarray(m).tobytes()


def test_dstm_header_layout():
    raw = dumps_dstm(np.array([[1.0, 2.0]]))
    assert raw[:4] == b"DSTM" and raw[4] == 1 and raw[5] == 0
    assert int.from_bytes(raw[6:14], "little") == 1 and int.from_bytes(raw[14:22], "little") == 2
    assert len(raw) == 22 + 16


@pytest.mark.parametrize("raw", [b"", b"XXXX" + bytes(18), dumps_dstm(np.ones((2, 2)))[:-1]])
def test_dstm_rejects_bad_input(raw):
    with pytest.raises(FormatError):
        loads_dstm(raw)


@pytest.mark.parametrize("name", ["m.dstm", "m.csv"])
def test_file_roundtrip(tmp_path, name):
    m = np.random.default_rng(0).standard_normal((3, 4))
    write_matrix(tmp_path / name, m)
    np.testing.assert_array_equal(read_matrix(tmp_path / name), m)
