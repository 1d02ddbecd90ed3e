"""Globally shaped matrices partitioned by rows, by columns, or replicated.

Each worker holds one contiguous equal block.  A transpose is only a tag:
the logical shape and partition flip, the stored block stays where it is and
is read through ``block.T``.
"""

import enum

import numpy as np
import scipy.sparse as sp

from ..errors import PartitionError, ShapeError


class Partition(enum.Enum):
    ROW = "row"
    COL = "col"
    REPL = "repl"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown partition {value!r}; expected row, col or repl") from None

    def flipped(self):
        return {Partition.ROW: Partition.COL, Partition.COL: Partition.ROW}.get(self, self)


ROW, COL, REPL = Partition.ROW, Partition.COL, Partition.REPL


def block_size(n, world_size, what="dimension"):
    if n % world_size:
        raise PartitionError(
            f"{what} of size {n} is not a multiple of the world size {world_size}"
        )
    return n // world_size


def local_shape(shape, partition, world_size):
    rows, cols = shape
    if partition is ROW:
        return block_size(rows, world_size, "row dimension"), cols
    if partition is COL:
        return rows, block_size(cols, world_size, "column dimension")
    return rows, cols


class DistMatrix:
    """A ``rows × cols`` matrix spread over the workers of ``comm``.

    ``data`` is the stored block of the untransposed matrix; use ``local`` for
    the block in logical orientation.
    """

    __array_priority__ = 100

    def __init__(self, comm, shape, partition, data, transposed=False):
        self.comm = comm
        partition = Partition.parse(partition)
        rows, cols = (int(shape[0]), int(shape[1]))
        if rows < 1 or cols < 1:
            raise ShapeError(f"global shape must be positive, got {(rows, cols)}")
        # stored (untransposed) geometry
        if transposed:
            self._shape = (cols, rows)
            self._partition = partition.flipped()
        else:
            self._shape = (rows, cols)
            self._partition = partition
        self._transposed = bool(transposed)
        expected = local_shape(self._shape, self._partition, comm.world_size)
        if data.ndim != 2 or tuple(data.shape) != expected:
            raise ShapeError(
                f"rank {comm.rank}: local block has shape {tuple(data.shape)}, "
                f"expected {expected} for {self._partition.value} partition of {self._shape}"
            )
        self.data = data

    # geometry ----------------------------------------------------------------

    @property
    def shape(self):
        return self._shape[::-1] if self._transposed else self._shape

    @property
    def partition(self):
        return self._partition.flipped() if self._transposed else self._partition

    @property
    def transposed(self):
        return self._transposed

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def issparse(self):
        return sp.issparse(self.data)

    @property
    def local(self):
        return self.data.T if self._transposed else self.data

    @property
    def T(self):
        return self.transpose()

    def transpose(self):
        out = object.__new__(DistMatrix)
        out.comm = self.comm
        out._shape = self._shape
        out._partition = self._partition
        out._transposed = not self._transposed
        out.data = self.data
        return out

    def offset(self):
        """Global index of the first row (ROW) or column (COL) held locally."""
        rows, cols = local_shape(self.shape, self.partition, self.comm.world_size)
        if self.partition is ROW:
            return self.comm.rank * rows
        if self.partition is COL:
            return self.comm.rank * cols
        return 0

    def copy(self):
        return DistMatrix(self.comm, self.shape, self.partition, _dense_copy(self.local))

    def astype(self, dtype):
        return DistMatrix(self.comm, self.shape, self.partition, self.local.astype(dtype))

    def __repr__(self):
        tag = ", transposed" if self._transposed else ""
        return (
            f"DistMatrix(shape={self.shape}, partition={self.partition.value}, "
            f"dtype={self.dtype}, rank={self.comm.rank}/{self.comm.world_size}{tag})"
        )

    # arithmetic ---------------------------------------------------------------

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs.get("out") is not None:
            return NotImplemented
        if ufunc.nout != 1:
            return NotImplemented
        if ufunc.nin == 1:
            return _wrap_like(self, ufunc(_dense(self.local), **kwargs))
        if ufunc.nin == 2:
            return _binary(lambda a, b: ufunc(a, b, **kwargs), inputs[0], inputs[1])
        return NotImplemented

    def __add__(self, other):
        return np.add(self, other)

    def __radd__(self, other):
        return np.add(other, self)

    def __sub__(self, other):
        return np.subtract(self, other)

    def __rsub__(self, other):
        return np.subtract(other, self)

    def __mul__(self, other):
        return np.multiply(self, other)

    def __rmul__(self, other):
        return np.multiply(other, self)

    def __truediv__(self, other):
        return np.true_divide(self, other)

    def __rtruediv__(self, other):
        return np.true_divide(other, self)

    def __pow__(self, other):
        return np.power(self, other)

    def __neg__(self):
        return np.negative(self)

    def __abs__(self):
        return np.abs(self)

    def __matmul__(self, other):
        from .matmul import matmul

        return matmul(self, other)


def _dense(block):
    return block.toarray() if sp.issparse(block) else block


def _dense_copy(block):
    return block.toarray() if sp.issparse(block) else np.array(block)


def _wrap_like(a, block):
    return DistMatrix(a.comm, a.shape, a.partition, np.asarray(block))


# construction -----------------------------------------------------------------


def _resolve_dtype(dtype):
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"unsupported precision {dt}; use float64 or float32")
    return dt


def create(comm, rows, cols, partition, init="uniform", *, seed=0, lo=0.0, hi=1.0,
           full=None, root=0, dtype=np.float64):
    """Allocate and initialize a distributed matrix.

    ``init`` is one of ``uniform`` (on ``[lo, hi)``), ``normal``, ``zeros``,
    ``ones`` or ``from_full`` (``full`` resident on ``root``).  Random
    matrices are drawn in full on ``root`` from ``seed`` and scattered, so the
    global matrix does not depend on the world size.
    """
    partition = Partition.parse(partition)
    dtype = _resolve_dtype(dtype)
    lshape = local_shape((rows, cols), partition, comm.world_size)
    if init == "zeros":
        return DistMatrix(comm, (rows, cols), partition, np.zeros(lshape, dtype=dtype))
    if init == "ones":
        return DistMatrix(comm, (rows, cols), partition, np.ones(lshape, dtype=dtype))
    if init in ("uniform", "normal"):
        if comm.rank == root:
            rng = np.random.default_rng(seed)
            if init == "uniform":
                full = rng.uniform(lo, hi, size=(rows, cols))
            else:
                full = rng.standard_normal((rows, cols))
        return from_full(comm, full, partition, root=root, shape=(rows, cols), dtype=dtype)
    if init == "from_full":
        return from_full(comm, full, partition, root=root, shape=(rows, cols), dtype=dtype)
    raise ValueError(f"unknown initializer {init!r}")


def from_full(comm, full, partition, root=0, shape=None, dtype=None):
    """Scatter (or broadcast, for REPL) a matrix resident on ``root``."""
    partition = Partition.parse(partition)
    if comm.rank == root:
        full = np.atleast_2d(np.asarray(full))
        if full.ndim != 2:
            raise ShapeError(f"expected a matrix, got {full.ndim} dimensions")
        dtype = _resolve_dtype(dtype if dtype is not None else
                               (full.dtype if full.dtype == np.float32 else np.float64))
        full = full.astype(dtype, copy=False)
        if shape is not None and tuple(full.shape) != tuple(shape):
            raise ShapeError(f"full matrix has shape {full.shape}, expected {tuple(shape)}")
        shape = full.shape
    elif shape is None:
        raise ValueError("non-root ranks must know the global shape")
    rows, cols = shape
    lshape = local_shape((rows, cols), partition, comm.world_size)
    if partition is REPL:
        buf = comm.broadcast(full if comm.rank == root else None, root=root)
        block = buf.reshape(rows, cols)
    elif partition is ROW:
        buf = comm.scatter(full if comm.rank == root else None, root=root)
        block = buf.reshape(lshape)
    else:
        buf = comm.scatter(full.T if comm.rank == root else None, root=root)
        block = np.ascontiguousarray(buf.reshape(lshape[1], lshape[0]).T)
    if dtype is not None:
        block = block.astype(dtype, copy=False)
    return DistMatrix(comm, (rows, cols), partition, block)


def distribute(comm, full, partition):
    """Slice a matrix that every rank already holds; no communication.

    Works for dense arrays and scipy sparse matrices (kept as CSR).
    """
    partition = Partition.parse(partition)
    if sp.issparse(full):
        full = sp.csr_matrix(full)
    else:
        full = np.atleast_2d(np.asarray(full))
    rows, cols = full.shape
    lr, lc = local_shape((rows, cols), partition, comm.world_size)
    if partition is ROW:
        block = full[comm.rank * lr:(comm.rank + 1) * lr, :]
    elif partition is COL:
        block = full[:, comm.rank * lc:(comm.rank + 1) * lc]
    else:
        block = full
    if sp.issparse(block):
        block = sp.csr_matrix(block)
    else:
        block = np.array(block, dtype=np.float32 if block.dtype == np.float32 else np.float64)
    return DistMatrix(comm, (rows, cols), partition, block)


def from_local(comm, block, shape, partition):
    """Wrap a rank-local block that already follows the partition layout."""
    return DistMatrix(comm, shape, partition, block)


def replicated(comm, full):
    return distribute(comm, full, REPL)


def gather_full(a, root=0, everywhere=False):
    """Materialize the logical global matrix on ``root`` (or on all ranks)."""
    comm = a.comm
    local = _dense(a.local)
    rows, cols = a.shape
    if a.partition is REPL:
        return np.array(local)
    if a.partition is ROW:
        buf = np.ascontiguousarray(local)
        flat = comm.all_gather(buf) if everywhere else comm.gather(buf, root=root)
        return None if flat is None else flat.reshape(rows, cols)
    buf = np.ascontiguousarray(local.T)
    flat = comm.all_gather(buf) if everywhere else comm.gather(buf, root=root)
    return None if flat is None else np.ascontiguousarray(flat.reshape(cols, rows).T)


# recycling elementwise arithmetic -------------------------------------------------


def broadcast_shape(s1, s2):
    out = []
    for a, b in zip(s1, s2):
        if a == b or b == 1:
            out.append(a)
        elif a == 1:
            out.append(b)
        else:
            raise ShapeError(f"shapes {tuple(s1)} and {tuple(s2)} cannot be recycled")
    return tuple(out)


def _operand_shape(x):
    if isinstance(x, DistMatrix):
        return x.shape
    arr = np.asarray(x)
    if arr.ndim == 0:
        return (1, 1)
    if arr.ndim == 1:
        return (arr.shape[0], 1)
    if arr.ndim == 2:
        return arr.shape
    raise ShapeError(f"operands must be at most two-dimensional, got {arr.ndim}")


def _as_matrix(x):
    arr = np.asarray(x)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    return arr


def _slice_for(block, partition, out_shape, comm):
    """Restrict a replicated operand to the rows/columns this rank owns."""
    lr, lc = local_shape(out_shape, partition, comm.world_size)
    if partition is ROW and block.shape[0] != 1:
        return block[comm.rank * lr:(comm.rank + 1) * lr, :]
    if partition is COL and block.shape[1] != 1:
        return block[:, comm.rank * lc:(comm.rank + 1) * lc]
    return block


def _binary(fn, x, y):
    dists = [v for v in (x, y) if isinstance(v, DistMatrix)]
    comm = dists[0].comm
    out_shape = broadcast_shape(_operand_shape(x), _operand_shape(y))
    parts = {v.partition for v in dists if v.partition is not REPL}
    if len(parts) > 1:
        raise PartitionError("cannot combine a row-partitioned and a column-partitioned matrix")
    partition = parts.pop() if parts else REPL
    axis = {ROW: 0, COL: 1}.get(partition)
    blocks = []
    for v in (x, y):
        if isinstance(v, DistMatrix):
            if v.partition is not REPL and v.shape[axis] != out_shape[axis]:
                raise PartitionError("a distributed dimension cannot be stretched")
            block = _dense(v.local)
            if v.partition is REPL and partition is not REPL:
                block = _slice_for(block, partition, out_shape, comm)
        else:
            block = _as_matrix(v)
            if block.ndim == 2 and partition is not REPL:
                block = _slice_for(block, partition, out_shape, comm)
        blocks.append(block)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        result = fn(blocks[0], blocks[1])
    lshape = local_shape(out_shape, partition, comm.world_size)
    result = np.broadcast_to(result, lshape)
    return DistMatrix(comm, out_shape, partition, np.array(result))


_BINARY = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.true_divide,
    "pow": np.power,
}


def elementwise(op, a, b):
    """``a op b`` with size-1 dimensions stretched (recycled) as needed."""
    try:
        fn = _BINARY[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_BINARY)}") from None
    if not isinstance(a, DistMatrix) and not isinstance(b, DistMatrix):
        raise TypeError("at least one operand must be a DistMatrix")
    return _binary(fn, a, b)


def soft_threshold_array(x, lam):
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def apply_unary(f, a, *params):
    """Apply a named elementwise function blockwise.

    ``f`` is one of exp, log, sqrt, abs, clamp (params lo, hi) or
    soft_threshold (param lam).
    """
    block = _dense(a.local)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if f in ("exp", "log", "sqrt", "abs"):
            out = getattr(np, f)(block)
        elif f == "clamp":
            lo, hi = params
            out = np.clip(block, lo, hi)
        elif f == "soft_threshold":
            (lam,) = params
            out = soft_threshold_array(block, lam)
        else:
            raise ValueError(f"unknown unary function {f!r}")
    return _wrap_like(a, out)


# reductions and structured operations ---------------------------------------------


def reduce_sum(a, along="all"):
    """Sum over everything (a float), over rows (1 × q) or over columns (p × 1)."""
    comm = a.comm
    block = _dense(a.local)
    if along == "all":
        s = float(np.sum(block, dtype=np.float64))
        return s if a.partition is REPL else comm.all_reduce_scalar(s)
    if along in ("rows", 0):
        sums = np.sum(block, axis=0, keepdims=True)
        if a.partition is ROW:
            sums = comm.all_reduce(sums).reshape(1, -1).astype(block.dtype, copy=False)
            return DistMatrix(comm, (1, a.shape[1]), REPL, sums)
        return DistMatrix(comm, (1, a.shape[1]), a.partition, sums)
    if along in ("cols", 1):
        sums = np.sum(block, axis=1, keepdims=True)
        if a.partition is COL:
            sums = comm.all_reduce(sums).reshape(-1, 1).astype(block.dtype, copy=False)
            return DistMatrix(comm, (a.shape[0], 1), REPL, sums)
        return DistMatrix(comm, (a.shape[0], 1), a.partition, sums)
    raise ValueError(f"unknown reduction axis {along!r}")


def _require_square(a, what):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"{what} requires a square matrix, got {a.shape}")


def diag(a, distribute=False):
    """Global diagonal as a p × 1 column, replicated or row-distributed."""
    _require_square(a, "diag")
    comm = a.comm
    n = a.shape[0]
    block = _dense(a.local)
    if a.partition is REPL:
        d = np.diag(block).reshape(-1, 1).copy()
        out = DistMatrix(comm, (n, 1), REPL, d)
        return _distribute_repl(out) if distribute else out
    off = a.offset()
    if a.partition is ROW:
        piece = block[np.arange(block.shape[0]), off + np.arange(block.shape[0])]
    else:
        piece = block[off + np.arange(block.shape[1]), np.arange(block.shape[1])]
    piece = piece.reshape(-1, 1).copy()
    if distribute:
        return DistMatrix(comm, (n, 1), ROW, piece)
    full = comm.all_gather(piece).reshape(-1, 1).astype(piece.dtype, copy=False)
    return DistMatrix(comm, (n, 1), REPL, full)


def _distribute_repl(v):
    comm = v.comm
    return distribute(comm, v.local, ROW)


def fill_diag(a, value):
    """Overwrite the global diagonal in place; returns ``a``."""
    _require_square(a, "fill_diag")
    if a.issparse:
        raise TypeError("fill_diag needs a dense block")
    block = a.local
    if a.partition is REPL:
        np.fill_diagonal(block, value)
        return a
    off = a.offset()
    if a.partition is ROW:
        idx = np.arange(block.shape[0])
        block[idx, off + idx] = value
    else:
        idx = np.arange(block.shape[1])
        block[off + idx, idx] = value
    return a


def cumsum(a, dim=0, reverse=False):
    """Prefix sums along ``dim`` in ascending (or descending) index order."""
    comm = a.comm
    block = _dense(a.local)
    if reverse:
        block = block[::-1, :] if dim == 0 else block[:, ::-1]
    split = {ROW: 0, COL: 1}.get(a.partition)
    if split is None or split != dim:
        out = np.cumsum(block, axis=dim)
        if reverse:
            out = out[::-1, :] if dim == 0 else out[:, ::-1]
        return _wrap_like(a, np.ascontiguousarray(out))
    if a.shape[1 - dim] != 1:
        raise ShapeError("cumsum along a distributed dimension needs a single row or column")
    totals = comm.all_gather(np.array([np.sum(block)]))
    ranks = np.arange(comm.world_size)
    before = ranks > comm.rank if reverse else ranks < comm.rank
    offset = np.sum(totals[before])
    out = np.cumsum(block, axis=dim) + offset
    if reverse:
        out = out[::-1, :] if dim == 0 else out[:, ::-1]
    return _wrap_like(a, np.ascontiguousarray(out.astype(block.dtype, copy=False)))


def norm_fro(a):
    block = _dense(a.local)
    s = float(np.sum(block.astype(np.float64) ** 2))
    if a.partition is not REPL:
        s = a.comm.all_reduce_scalar(s)
    return float(np.sqrt(s))


def inner(a, b):
    """Frobenius inner product ⟨a, b⟩ of identically shaped matrices."""
    prod = _binary(np.multiply, a, b)
    return reduce_sum(prod, "all")
