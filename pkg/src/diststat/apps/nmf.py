"""Nonnegative matrix factorization X ~ V W over row-split X.

Layouts: X is [m] x p (ROW), V is [m] x r (ROW), W is r x [p] (COL).
"""

from dataclasses import dataclass

import numpy as np

from ..distmat import COL, ROW, DistMatrix, create, matmul, norm_fro, reduce_sum
from ..errors import ContractError
from ..optim import Monitor, SolverConfig, mm_drive

EPS = 1e-20


@dataclass
class NmfState:
    X: DistMatrix
    V: DistMatrix
    W: DistMatrix
    eps: float = 0.0


def nmf_problem(comm, m, p, r, seed=0, eps=0.0, dtype=np.float64):
    """Uniform(0, 1) data and starting factors, identical for every world size."""
    X = create(comm, m, p, ROW, "uniform", seed=seed, dtype=dtype)
    V = create(comm, m, r, ROW, "uniform", seed=seed + 1, dtype=dtype)
    W = create(comm, p, r, ROW, "uniform", seed=seed + 2, dtype=dtype).T
    return NmfState(X, V, W, eps)


def _check_nonneg(*mats):
    for a in mats:
        bad = float(np.sum(np.asarray(a.local) < 0))
        if a.partition.value != "repl":
            bad = a.comm.all_reduce_scalar(bad)
        if bad:
            raise ContractError("NMF inputs must be entrywise nonnegative")


def _check_layout(state):
    X, V, W = state.X, state.V, state.W
    if X.partition is not ROW or V.partition is not ROW or W.partition is not COL:
        raise ContractError("NMF expects X and V split by rows and W split by columns")
    if V.shape[0] != X.shape[0] or W.shape[1] != X.shape[1] or V.shape[1] != W.shape[0]:
        raise ContractError(f"incompatible shapes X{X.shape}, V{V.shape}, W{W.shape}")


def nmf_loss(X, V, W):
    """||X - V W||_F^2 (the product uses the row-by-column scenario)."""
    outer = matmul(V, W)
    return reduce_sum((X - outer) ** 2, "all")


def nmf_objective(X, V, W, eps=0.0):
    val = nmf_loss(X, V, W)
    if eps:
        val += eps / 2.0 * (norm_fro(V) ** 2 + norm_fro(W) ** 2)
    return val


def multiplicative_step(X, V, W, eps=EPS):
    """One MM step: V <- V * XW' / (VWW' + eps), then W <- W * V'X / (V'VW + eps)."""
    XWt = matmul(X, W.T)
    WWt = matmul(W, W.T)
    VWWt = matmul(V, WWt)
    V = V * XWt / (VWWt + eps)
    VtX = matmul(V.T, X, out=COL)
    VtV = matmul(V.T, V)
    VtVW = matmul(VtV, W)
    W = W * VtX / (VtVW + eps)
    return V, W


def nmf_multiplicative(state, config=None, callback=None):
    """Lee-Seung multiplicative updates driven as an MM algorithm.

    Returns ``(V, W, trace)``; the trace holds ||X - VW||_F^2.
    """
    config = config or SolverConfig()
    _check_layout(state)
    _check_nonneg(state.X, state.V, state.W)
    X = state.X

    def step(vw):
        return multiplicative_step(X, *vw)

    (V, W), trace = mm_drive(step, lambda vw: nmf_loss(X, *vw), (state.V, state.W),
                             config, callback=callback)
    return V, W, trace


def _step_bound(M, eps, rule):
    r = M.shape[0]
    norm = np.linalg.norm(M + eps * np.eye(r), "fro")
    if rule == "frobenius":
        return 1.0 / (2.0 * norm)
    if rule == "squared":
        return 1.0 / (2.0 * norm**2)
    raise ValueError(f"unknown step rule {rule!r}")


def nmf_apg(state, config=None, step_rule="frobenius", callback=None):
    """Alternating projected gradient on ||X - VW||_F^2 + eps/2 (||V||^2 + ||W||^2).

    ``step_rule`` picks sigma_n = 1 / (2 ||W W' + eps I||_F) (``frobenius``,
    a Lipschitz bound) or the far more conservative 1 / (2 ||.||_F^2)
    (``squared``); likewise for tau_n.  The steps actually used are recorded
    in the trace extras ``sigma`` and ``tau``.
    """
    config = config or SolverConfig()
    _check_layout(state)
    _check_nonneg(state.X, state.V, state.W)
    X, eps = state.X, float(state.eps)
    if eps < 0:
        raise ContractError("ridge parameter must be nonnegative")
    steps = {"sigma": 0.0, "tau": 0.0}

    def objective(vw):
        return nmf_objective(X, vw[0], vw[1], eps)

    def extras(vw):
        return dict(steps)

    mon = Monitor(config, objective, residuals=extras)
    V, W = state.V, state.W
    mon.start((V, W))
    n = 0
    for n in range(1, config.max_iters + 1):
        XWt = matmul(X, W.T)
        WWt = matmul(W, W.T)
        VWWt = matmul(V, WWt)
        sig = _step_bound(WWt.local, eps, step_rule)
        V = np.maximum(V * (1.0 - sig * eps) - (VWWt - XWt) * sig, 0.0)
        VtX = matmul(V.T, X, out=COL)
        VtV = matmul(V.T, V)
        VtVW = matmul(VtV, W)
        tau = _step_bound(VtV.local, eps, step_rule)
        W = np.maximum(W * (1.0 - tau * eps) - (VtVW - VtX) * tau, 0.0)
        steps["sigma"], steps["tau"] = sig, tau
        if callback is not None:
            callback(n, V, W)
        if mon.update(n, (V, W)):
            break
    return V, W, mon.finish(n, (V, W))
