"""The eleven distributed multiplication scenarios.

A is p × r and B is r × q.  Six scenarios have their own kernels; the other
five run one of those on transposed operands and transpose the result, which
only flips tags.
"""

import numpy as np
import scipy.sparse as sp

from ..errors import DispatchError, ShapeError
from .core import COL, REPL, ROW, DistMatrix, Partition, distribute, gather_full

# id -> (A partition, B partition, output partition, communication)
SCENARIOS = {
    1: (ROW, ROW, ROW, "1 all-gather (r x q)"),
    2: (ROW, COL, ROW, "1 all-gather (r x q)"),
    3: (ROW, COL, COL, "1 all-gather (r x p)"),
    4: (ROW, REPL, ROW, "none"),
    5: (COL, ROW, REPL, "1 all-reduce (p x q)"),
    6: (COL, ROW, ROW, "T reductions (p x q/T each)"),
    7: (COL, ROW, COL, "T reductions (q x p/T each)"),
    8: (COL, COL, COL, "1 all-gather (p x r)"),
    9: (COL, REPL, REPL, "1 all-reduce (p x q)"),
    10: (REPL, ROW, REPL, "1 all-reduce (p x q)"),
    11: (REPL, COL, COL, "none"),
}

# used when the output partition is not specified
_DEFAULTS = {(ROW, COL): 2, (COL, ROW): 5}


def scenario_of(a_part, b_part, out=None):
    """Scenario id for a partition triple; raises DispatchError if there is none."""
    a_part, b_part = Partition.parse(a_part), Partition.parse(b_part)
    out = None if out is None else Partition.parse(out)
    matches = [
        sid for sid, (pa, pb, po, _) in SCENARIOS.items()
        if pa is a_part and pb is b_part and (out is None or po is out)
    ]
    if len(matches) > 1:
        matches = [_DEFAULTS[(a_part, b_part)]]
    if not matches:
        name = "any" if out is None else out.value
        raise DispatchError(
            f"no multiplication scenario for A={a_part.value}, B={b_part.value}, out={name}"
        )
    return matches[0]


def _product(x, y):
    if sp.issparse(x) and sp.issparse(y):
        return np.asarray((x @ y).toarray())
    return np.asarray(x @ y)


def _dtype(a, b):
    return np.result_type(a.dtype, b.dtype)


def _s1(a, b):
    full_b = gather_full(b, everywhere=True)
    return DistMatrix(a.comm, (a.shape[0], b.shape[1]), ROW, _product(a.local, full_b))


def _s2(a, b):
    full_b = gather_full(b, everywhere=True)
    return DistMatrix(a.comm, (a.shape[0], b.shape[1]), ROW, _product(a.local, full_b))


def _s4(a, b):
    return DistMatrix(a.comm, (a.shape[0], b.shape[1]), ROW, _product(a.local, b.local))


def _s5(a, b):
    comm = a.comm
    part = _product(a.local, b.local)
    dt = part.dtype
    total = comm.all_reduce(part).reshape(part.shape).astype(dt, copy=False)
    return DistMatrix(comm, (a.shape[0], b.shape[1]), REPL, total)


def _s7(a, b):
    comm = a.comm
    p, q = a.shape[0], b.shape[1]
    part = _product(a.local, b.local)
    dt = part.dtype
    width = q // comm.world_size
    mine = None
    for j in range(comm.world_size):
        res = comm.reduce(part[:, j * width:(j + 1) * width], root=j)
        if j == comm.rank:
            mine = res.reshape(p, width).astype(dt, copy=False)
    return DistMatrix(comm, (p, q), COL, mine)


def _s9(a, b):
    comm = a.comm
    off = a.offset()
    width = a.local.shape[1]
    part = _product(a.local, b.local[off:off + width, :])
    dt = part.dtype
    total = comm.all_reduce(part).reshape(part.shape).astype(dt, copy=False)
    return DistMatrix(comm, (a.shape[0], b.shape[1]), REPL, total)


def _via(kernel):
    def run(a, b):
        return kernel(b.T, a.T).T

    return run


_KERNELS = {
    1: _s1,
    2: _s2,
    3: _via(_s2),
    4: _s4,
    5: _s5,
    6: _via(_s7),
    7: _s7,
    8: _via(_s1),
    9: _s9,
    10: _via(_s9),
    11: _via(_s4),
}


def matmul(a, b, out=None):
    """Distributed product ``a @ b``.

    ``out`` (a partition, or a DistMatrix whose partition to copy) picks the
    output layout where several scenarios share the same inputs.
    """
    if not isinstance(a, DistMatrix) and isinstance(b, DistMatrix):
        a = distribute(b.comm, a, REPL)
    if not isinstance(b, DistMatrix) and isinstance(a, DistMatrix):
        b = distribute(a.comm, b, REPL)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    if isinstance(out, DistMatrix):
        out = out.partition
    sid = scenario_of(a.partition, b.partition, out)
    result = _KERNELS[sid](a, b)
    dt = _dtype(a, b)
    if result.dtype != dt:
        result = result.astype(dt)
    return result


def matmul_with_scenario(a, b, out=None):
    """Like :func:`matmul` but also returns the scenario id used."""
    if isinstance(out, DistMatrix):
        out = out.partition
    sid = scenario_of(a.partition, b.partition, out)
    return matmul(a, b, out=SCENARIOS[sid][2]), sid
