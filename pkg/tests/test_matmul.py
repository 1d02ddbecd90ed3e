import numpy as np
import pytest
import scipy.sparse as sp

from conftest import WORLD_SIZES, rel_err, run0
from diststat.comm import local_comm
from diststat.distmat import (
    COL,
    REPL,
    ROW,
    SCENARIOS,
    create,
    distribute,
    gather_full,
    matmul,
    matmul_with_scenario,
    scenario_of,
)
from diststat.errors import DispatchError, ShapeError


def _scenario(comm, sid, p, r, q, seed):
    pa, pb, po, _ = SCENARIOS[sid]
    a = create(comm, p, r, pa, "normal", seed=seed)
    b = create(comm, r, q, pb, "normal", seed=seed + 1)
    c, used = matmul_with_scenario(a, b, out=po)
    return used, c.partition, gather_full(c), gather_full(a), gather_full(b)


@pytest.mark.parametrize("world", WORLD_SIZES)
@pytest.mark.parametrize("sid", sorted(SCENARIOS))
def test_scenario_matches_dense_oracle(world, sid):
    used, part, c, a, b = run0(world, _scenario, sid, 8, 12, 4, sid)
    assert used == sid
    assert part is SCENARIOS[sid][2]
    assert rel_err(c, a @ b) <= 1e-12


def test_identity_scenario_1():
    b = np.arange(8.0).reshape(4, 2)
    got = run0(4, lambda c: gather_full(matmul(distribute(c, np.eye(4), ROW),
                                                distribute(c, b, ROW))))
    np.testing.assert_array_equal(got, b)


def test_zeros_scenario_4():
    def prog(comm):
        a = create(comm, 4, 3, ROW, "zeros")
        b = distribute(comm, np.ones((3, 2)), REPL)
        c, sid = matmul_with_scenario(a, b)
        return sid, c.partition, gather_full(c)

    sid, part, c = run0(2, prog)
    assert sid == 4 and part is ROW
    np.testing.assert_array_equal(c, np.zeros((4, 2)))


def test_scenario_5_random():
    used, part, c, a, b = run0(1, _scenario, 5, 4, 3, 2, 11)
    assert part is REPL and rel_err(c, a @ b) <= 1e-12


def test_defaults_and_hints():
    assert scenario_of(ROW, COL) == 2
    assert scenario_of(ROW, COL, COL) == 3
    assert scenario_of(COL, ROW) == 5
    assert scenario_of(COL, ROW, ROW) == 6
    assert scenario_of(COL, ROW, COL) == 7


def test_dispatch_error_names_triple():
    with pytest.raises(DispatchError, match="repl"):
        scenario_of(REPL, REPL)
    with pytest.raises(DispatchError):
        scenario_of(ROW, ROW, COL)


def test_inner_dimension_mismatch():
    comm = local_comm()
    with pytest.raises(ShapeError):
        matmul(create(comm, 2, 3, ROW, "ones"), create(comm, 2, 2, ROW, "ones"))


def test_sparse_operand():
    m = sp.random(8, 8, density=0.25, random_state=3, format="csr")
    x = np.random.default_rng(0).standard_normal((8, 1))

    def prog(comm):
        a = distribute(comm, m, COL)
        return gather_full(matmul(a, distribute(comm, x, ROW)))

    np.testing.assert_allclose(run0(4, prog), m @ x, rtol=1e-13, atol=1e-14)


def test_transposed_operands():
    a_full = np.random.default_rng(1).standard_normal((8, 4))

    def prog(comm):
        a = distribute(comm, a_full, ROW)
        return gather_full(matmul(a.T, a)), gather_full(matmul(a, a.T, out=ROW))

    g1, g2 = run0(4, prog)
    assert rel_err(g1, a_full.T @ a_full) <= 1e-12
    assert rel_err(g2, a_full @ a_full.T) <= 1e-12
