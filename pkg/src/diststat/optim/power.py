"""Spectral norm by power iteration on K^T K."""

import numpy as np

from ..errors import ContractError, IterationError
from .base import LinearOperator, vdot, vnorm


def power_iteration(op, tol=1e-8, max_iters=10000, seed=0):
    """Largest singular value of ``op`` (a LinearOperator or a matrix).

    Iterates v <- K^T K v / ||K^T K v|| until the eigen-residual
    ||K^T K v - rho v|| falls below ``tol * rho``, then returns ||K v||.
    """
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    rng = np.random.default_rng(seed)
    v = op.random_domain(rng)
    nv = vnorm(v)
    if nv == 0:
        raise ContractError("power iteration needs a nonzero start vector")
    v = v / nv
    for _ in range(max_iters):
        w = op.adjoint(op.forward(v))
        rho = vdot(v, w)
        nw = vnorm(w)
        if nw == 0:
            raise ContractError("operator is zero")
        resid = vnorm(w - v * rho)
        v = w / nw
        if resid <= tol * abs(rho):
            return float(vnorm(op.forward(v)))
    raise IterationError(
        f"power iteration did not reach tolerance {tol} within {max_iters} iterations"
    )
