"""l1-penalized Cox proportional hazards regression by proximal gradient.

Layouts: X is m x [p] (COL), beta is [p] x 1 (ROW).  Subjects are sorted
by observed time in strictly descending order, so every risk set
{j : y_j >= y_i} is the prefix 1..i and its weight sum is a cumulative sum.
"""

from dataclasses import dataclass, field

import numpy as np

from ..distmat import COL, REPL, ROW, DistMatrix, create, distribute, gather_full, matmul
from ..errors import ContractError
from ..optim import Objective, SolverConfig, power_iteration, proximal_gradient
from ..prox import L1


@dataclass
class CoxDataset:
    X: DistMatrix  # m x [p]
    y: np.ndarray  # observed times, strictly decreasing
    delta: np.ndarray  # event indicators
    lam: float = 0.0
    unpenalized: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.delta = np.asarray(self.delta, dtype=float).reshape(-1)
        m, p = self.X.shape
        if self.X.partition is not COL:
            raise ContractError("covariates must be split by columns")
        if self.y.size != m or self.delta.size != m:
            raise ContractError(f"need {m} times and event indicators")
        if np.any(np.diff(self.y) >= 0):
            raise ContractError("observed times must be strictly decreasing (no ties)")
        if not np.all((self.delta == 0) | (self.delta == 1)):
            raise ContractError("event indicators must be 0 or 1")
        if self.lam < 0:
            raise ContractError("penalty must be nonnegative")
        self.unpenalized = tuple(int(i) for i in self.unpenalized)
        if any(not 0 <= i < p for i in self.unpenalized):
            raise ContractError("unpenalized index out of range")

    @property
    def shape(self):
        return self.X.shape


def cox_data(comm, m, p, seed=0, lam=0.0, censor=0.3, unpenalized=()):
    """Standard-normal covariates, exponential survival times from a sparse
    true beta, about ``censor`` of the subjects censored."""
    X = create(comm, m, p, COL, "normal", seed=seed)
    rng = np.random.default_rng(seed + 1)
    beta = np.zeros(p)
    beta[: max(1, p // 4)] = rng.uniform(-1.0, 1.0, max(1, p // 4))
    eta = gather_full(X, everywhere=True) @ beta
    times = rng.exponential(np.exp(-eta))
    delta = (rng.random(m) >= censor).astype(float)
    order = np.argsort(-times, kind="stable")
    Xs = gather_full(X, everywhere=True)[order]
    return CoxDataset(distribute(comm, Xs, COL), times[order], delta[order], lam, unpenalized)


def _linear_predictor(data, beta):
    return matmul(data.X, beta).local.reshape(-1)  # COL x ROW -> replicated


def log_partial_likelihood(data, beta):
    """sum_i delta_i (x_i' beta - log W_i) with W_i = sum_{j <= i} exp(x_j' beta)."""
    eta = _linear_predictor(data, beta)
    top = eta.max()
    log_w = np.log(np.cumsum(np.exp(eta - top))) + top
    return float(np.sum(data.delta * (eta - log_w)))


def cox_gradient(data, beta):
    """X'(I - P) delta with (P delta)_j = w_j sum_{i >= j} delta_i / W_i."""
    eta = _linear_predictor(data, beta)
    w = np.exp(eta - eta.max())
    W = np.cumsum(w)
    p_delta = w * np.cumsum((data.delta / W)[::-1])[::-1]
    r = distribute(data.X.comm, (data.delta - p_delta).reshape(-1, 1), REPL)
    return matmul(data.X.T, r)  # ROW x REPL -> ROW


def _penalty_weights(data):
    wts = np.ones((data.shape[1], 1))
    wts[list(data.unpenalized)] = 0.0
    return distribute(data.X.comm, wts, ROW)


def cox_objective(data, beta, penalized=True):
    """Minimized form -L(beta) + lam ||beta_S||_1 (S the penalized indices)."""
    val = -log_partial_likelihood(data, beta)
    if penalized and data.lam:
        val += L1(_penalty_weights(data) * data.lam).value(beta)
    return val


def cox_lipschitz(data, tol=1e-10, seed=0):
    """2 ||X||_2^2, a bound on the Hessian norm of L."""
    return 2.0 * power_iteration(data.X, tol=tol, seed=seed) ** 2


def cox_l1(data, beta0=None, step=None, config=None, callback=None):
    """beta <- S_{step lam}(beta + step X'(I - P) delta); unpenalized
    coordinates take a plain gradient step.  ``step`` defaults to
    1 / (2 ||X||_2^2).  Returns ``(beta, trace)`` with the minimized objective."""
    config = config or SolverConfig()
    comm = data.X.comm
    if beta0 is None:
        beta0 = create(comm, data.shape[1], 1, ROW, "zeros")
    smooth = Objective(
        value=lambda b: -log_partial_likelihood(data, b),
        gradient=lambda b: -cox_gradient(data, b),
        lipschitz=cox_lipschitz(data, seed=config.seed),
    )
    penalty = L1(_penalty_weights(data) * data.lam)
    return proximal_gradient(smooth, penalty, beta0, step=step, config=config, callback=callback)

