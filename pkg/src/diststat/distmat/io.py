"""Matrix files: the DSTM binary format and plain CSV.

DSTM layout, little-endian::

    b"DSTM" | u8 version (1) | u8 dtype (0 = f64, 1 = f32) | u64 rows | u64 cols | row-major payload
"""

import struct

import numpy as np

MAGIC = b"DSTM"
VERSION = 1
_HEAD = struct.Struct("<4sBBQQ")
_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


class FormatError(ValueError):
    pass


def dumps_dstm(matrix):
    m = np.atleast_2d(np.asarray(matrix))
    if m.ndim != 2:
        raise ValueError(f"DSTM stores matrices, got {m.ndim} dimensions")
    if m.dtype not in _CODES:
        m = m.astype(np.float64)
    code = _CODES[m.dtype]
    payload = np.ascontiguousarray(m, dtype=_DTYPES[code]).tobytes()
    return _HEAD.pack(MAGIC, VERSION, code, m.shape[0], m.shape[1]) + payload


def loads_dstm(raw):
    if len(raw) < _HEAD.size:
        raise FormatError("truncated DSTM header")
    magic, version, code, rows, cols = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported DSTM version {version}")
    if code not in _DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    dt = _DTYPES[code]
    expected = rows * cols * dt.itemsize
    if len(raw) - _HEAD.size != expected:
        raise FormatError(f"payload has {len(raw) - _HEAD.size} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=dt, offset=_HEAD.size, count=rows * cols)
    return data.reshape(rows, cols).astype(dt.newbyteorder("="))


def write_dstm(path, matrix):
    with open(path, "wb") as fh:
        fh.write(dumps_dstm(matrix))


def read_dstm(path):
    with open(path, "rb") as fh:
        return loads_dstm(fh.read())


def write_csv(path, matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    np.savetxt(path, m, delimiter=",", fmt="%.17g")


def read_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2))


def read_matrix(path):
    """Dispatch on extension: ``.csv`` is text, anything else DSTM."""
    if str(path).lower().endswith(".csv"):
        return read_csv(path)
    return read_dstm(path)


def write_matrix(path, matrix):
    if str(path).lower().endswith(".csv"):
        write_csv(path, matrix)
    else:
        write_dstm(path, matrix)
