"""Metric multidimensional scaling by MM with equal weights.

Layouts: dissimilarities y are [q] x q (ROW), the embedding theta is [q] x p
(ROW).  Each update needs every point, so theta is broadcast once per
iteration through the COL x COL product.
"""

from dataclasses import dataclass

import numpy as np

from ..distmat import ROW, DistMatrix, create, fill_diag, matmul, reduce_sum
from ..errors import ContractError
from ..optim import SolverConfig, mm_drive


@dataclass
class MdsProblem:
    y: DistMatrix  # [q] x q dissimilarities
    p: int = 2

    def __post_init__(self):
        q, q2 = self.y.shape
        if q != q2 or q < 2:
            raise ContractError(f"dissimilarities must be square with q >= 2, got {self.y.shape}")
        if self.y.partition is not ROW:
            raise ContractError("dissimilarities must be split by rows")
        if self.p < 1:
            raise ContractError("embedding dimension must be positive")

    @property
    def q(self):
        return self.y.shape[0]


def pairwise_distances(x):
    """Euclidean distances between the rows of a row-split [m] x d matrix.

    Each rank broadcasts its block in turn; every rank fills the matching
    column block of its rows.  Entries are direct differences, so the
    result is exactly symmetric and the same for any world size.
    """
    if x.partition is not ROW:
        raise ContractError("pairwise_distances expects a row-split matrix")
    comm = x.comm
    mine = np.asarray(x.local, dtype=float)
    m = x.shape[0]
    out = np.zeros((mine.shape[0], m))
    start = 0
    for root in range(comm.world_size):
        other = comm.broadcast(mine if comm.rank == root else None, root).reshape(-1, mine.shape[1])
        diff = mine[:, None, :] - other[None, :, :]
        out[:, start:start + other.shape[0]] = np.sqrt(np.sum(diff * diff, axis=2))
        start += other.shape[0]
    return DistMatrix(comm, (m, m), ROW, out)


def mds_problem(comm, q, dim=2, p=None, seed=0):
    """Dissimilarities among q standard-normal points in R^dim, plus those points."""
    pts = create(comm, q, dim, ROW, "normal", seed=seed)
    return MdsProblem(pairwise_distances(pts), dim if p is None else p), pts


def initial_embedding(comm, q, p, seed=0):
    return create(comm, q, p, ROW, "uniform", seed=seed, lo=-1.0, hi=1.0)


def stress(y, theta):
    """sum_i sum_{j != i} (y_ij - ||theta_i - theta_j||)^2."""
    resid = y - pairwise_distances(theta)
    return reduce_sum(resid * resid, "all")


def _check(problem, theta):
    y = problem.y
    bad = float(np.sum(y.local < 0))
    if y.comm.all_reduce_scalar(bad):
        raise ContractError("dissimilarities must be nonnegative")
    if theta.partition is not ROW or theta.shape != (problem.q, problem.p):
        raise ContractError(f"embedding must be a row-split {problem.q} x {problem.p} matrix")


def mds_step(y, theta):
    """One MM update with unit weights.

    With Z_ij = y_ij / ||theta_i - theta_j|| (0 on the diagonal and for
    coincident points) the new row is
    theta_i <- (theta_i (q - 1 + sum_j Z_ij) + sum_j (1 - Z_ij) theta_j) / (2 (q - 1)).
    """
    q = y.shape[0]
    dist = pairwise_distances(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(dist.local > 0, y.local / dist.local, 0.0)
    Z = DistMatrix(y.comm, y.shape, ROW, z)
    fill_diag(Z, 0.0)
    z_sums = reduce_sum(Z, "cols")  # [q] x 1
    wmz = 1.0 - Z
    fill_diag(wmz, 0.0)
    # (sum_j (1 - Z_ij) theta_j)' = theta' (1 - Z)' as a COL x COL product
    twmz = matmul(theta.T, wmz.T)
    return (theta * (q - 1.0 + z_sums) + twmz.T) / (2.0 * (q - 1.0))


def mds_fit(problem, theta0, config=None, callback=None):
    """MM iterations on the stress; returns ``(theta, trace)``."""
    config = config or SolverConfig()
    _check(problem, theta0)
    y = problem.y
    return mm_drive(lambda th: mds_step(y, th), lambda th: stress(y, th), theta0, config,
                    callback=callback)
