"""Poisson emission tomography on a square pixel grid.

The image lives on [-1, 1]^2 split into g x g pixels, indexed row-major
(j = r g + c, row r along y).  Detectors sit uniformly on the circumscribing
circle; every detector pair defines a chord, and e_ij is the length of chord
i inside pixel j, with each column scaled to sum to one (or zero when no
chord crosses the pixel).  D stacks horizontal then vertical neighbour
differences, one +1 and one -1 per row.

Layouts: E and D are column-split (d x [p], e x [p]); lambda is [p] x 1.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..distmat import COL, REPL, ROW, DistMatrix, create, distribute, matmul
from ..errors import ContractError
from ..optim import LinearOperator, SolverConfig, mm_drive, pdhg, pdhg_dual, stochastic_pdhg
from ..optim.solvers import pdhg_steps
from ..prox import L1, NegLog, ProxFn

EPS = 1e-20
DEFAULT_STEP = 1.0 / 3.0


@dataclass
class PetProblem:
    E: object  # d x p, scipy sparse or dense
    D: object  # e x p
    y: np.ndarray  # d counts
    g: int = 0

    def __post_init__(self):
        self.E = sp.csr_matrix(self.E)
        self.D = sp.csr_matrix(self.D)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        d, p = self.E.shape
        if self.y.size != d:
            raise ContractError(f"{self.y.size} counts for {d} detector pairs")
        if self.D.shape[1] != p:
            raise ContractError("E and D must have the same number of columns")
        if self.E.nnz and self.E.data.min() < 0:
            raise ContractError("detection probabilities must be nonnegative")
        if np.any(self.y < 0):
            raise ContractError("counts must be nonnegative")

    @property
    def shape(self):
        return self.E.shape


def detector_positions(n_d):
    ang = 2.0 * np.pi * np.arange(n_d) / n_d
    # snap away trig roundoff so chords along a pixel edge are not tilted by 1e-16
    return np.round(np.sqrt(2.0) * np.column_stack([np.cos(ang), np.sin(ang)]), 12)


def chord_lengths(p0, p1, g):
    """Lengths of the segment p0 -> p1 inside each pixel (dict pixel -> length)."""
    h = 2.0 / g
    delta = p1 - p0
    length = float(np.hypot(*delta))
    alphas = [0.0, 1.0]
    for axis in (0, 1):
        if delta[axis] != 0:
            planes = -1.0 + h * np.arange(g + 1)
            alphas.extend((planes - p0[axis]) / delta[axis])
    alphas = np.unique(np.clip(alphas, 0.0, 1.0))
    out = {}
    tiny = 1e-12 * h
    for a0, a1 in zip(alphas[:-1], alphas[1:]):
        seg = (a1 - a0) * length
        if seg <= tiny:
            continue
        mid = p0 + 0.5 * (a0 + a1) * delta
        if np.any(np.abs(mid) >= 1.0):
            continue
        c = min(int((mid[0] + 1.0) / h), g - 1)
        r = min(int((mid[1] + 1.0) / h), g - 1)
        j = r * g + c
        out[j] = out.get(j, 0.0) + seg
    return out


def difference_matrix(g):
    """Anisotropic TV differences on a g x g grid: 2 g (g - 1) rows."""
    rows, cols, vals = [], [], []
    e = 0
    for r in range(g):
        for c in range(g - 1):
            rows += [e, e]
            cols += [r * g + c + 1, r * g + c]
            vals += [1.0, -1.0]
            e += 1
    for r in range(g - 1):
        for c in range(g):
            rows += [e, e]
            cols += [(r + 1) * g + c, r * g + c]
            vals += [1.0, -1.0]
            e += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(e, g * g))


def pet_system(g, n_d):
    """Detection matrix E (d x g^2, d = n_d (n_d - 1) / 2) and difference matrix D."""
    if g < 2 or n_d < 2:
        raise ValueError("need g >= 2 and n_d >= 2")
    det = detector_positions(n_d)
    rows, cols, vals = [], [], []
    for i, (a, b) in enumerate(itertools.combinations(range(n_d), 2)):
        for j, ell in chord_lengths(det[a], det[b], g).items():
            rows.append(i)
            cols.append(j)
            vals.append(ell)
    d = n_d * (n_d - 1) // 2
    E = sp.csr_matrix((vals, (rows, cols)), shape=(d, g * g))
    colsum = np.asarray(E.sum(axis=0)).ravel()
    scale = np.divide(1.0, colsum, out=np.zeros_like(colsum), where=colsum > 0)
    E = sp.csr_matrix(E @ sp.diags(scale))
    return E, difference_matrix(g)


def phantom(g):
    """A simple test image: a bright disc on a dim background."""
    h = 2.0 / g
    c = -1.0 + (np.arange(g) + 0.5) * h
    xx, yy = np.meshgrid(c, c)
    img = np.where(xx**2 + (yy - 0.1) ** 2 < 0.35, 4.0, 1.0)
    return img.reshape(-1)


def pet_toy(g=4, n_d=16, seed=0, scale=50.0):
    """System matrices plus Poisson counts y ~ Poisson(E lambda_true)."""
    E, D = pet_system(g, n_d)
    lam = scale * phantom(g)
    rng = np.random.default_rng(seed)
    y = rng.poisson(E @ lam).astype(float)
    return PetProblem(E, D, y, g), lam


# distributed pieces -------------------------------------------------------------


class _Dist:
    """The problem's matrices distributed over one world."""

    def __init__(self, comm, problem):
        self.comm = comm
        self.problem = problem
        d, p = problem.E.shape
        self.d, self.p, self.e = d, p, problem.D.shape[0]
        self.E = distribute(comm, problem.E, COL)
        # a single pixel has no neighbours, so D may have no rows
        self.D = distribute(comm, problem.D, COL) if self.e else None
        self.y = distribute(comm, problem.y.reshape(-1, 1), REPL)
        self.ones_d = distribute(comm, np.ones((d, 1)), REPL)
        self.s = matmul(self.E.T, self.ones_d)  # E^T 1, [p] x 1

    def ones(self):
        return create(self.comm, self.p, 1, ROW, "ones")

    def forward(self, lam):
        return matmul(self.E, lam)

    def loglik(self, lam):
        """sum_i y_i log (E lam)_i - (E lam)_i."""
        el = self.forward(lam).local.reshape(-1)
        y = self.problem.y
        with np.errstate(divide="ignore"):
            terms = np.where(y > 0, y * np.log(np.where(y > 0, el, 1.0)), 0.0) - el
        return float(np.sum(terms))

    def dlam(self, lam):
        if self.D is None:
            return np.zeros(0)
        return matmul(self.D, lam).local.reshape(-1)


def _initial(dist, lam0):
    if lam0 is None:
        return dist.ones()
    if isinstance(lam0, DistMatrix):
        return lam0
    return distribute(dist.comm, np.asarray(lam0, dtype=float).reshape(-1, 1), ROW)


# ridge-penalized MM ------------------------------------------------------------


def pet_mm_ridge(comm, problem, mu=0.0, lam0=None, config=None, callback=None):
    """MM for max L(lambda) - (mu/2) ||D lambda||^2 over lambda >= 0.

    Per pixel the surrogate's stationarity condition is the quadratic
    a_j l^2 + b_j l + c_j = 0 with a = -2 mu N, b = mu (N lambda + G lambda) - E'1,
    c = lambda * E'(y / E lambda), where N holds pixel degrees and G the
    neighbour adjacency.  For mu = 0 this is the EM update c / E'1.
    The trace stores the minimized form -L(lambda) + (mu/2) ||D lambda||^2.
    """
    if mu < 0:
        raise ContractError("ridge penalty must be nonnegative")
    config = config or SolverConfig()
    dist = _Dist(comm, problem)
    lam = _initial(dist, lam0)
    if comm.all_reduce_scalar(float(np.sum(lam.local <= 0))):
        raise ContractError("initial intensities must be positive")
    dtd = (problem.D.T @ problem.D).tocsr()
    degree = dtd.diagonal()
    adjacency = sp.csr_matrix(sp.diags(degree) - dtd)
    N = distribute(comm, degree.reshape(-1, 1), ROW)
    G = distribute(comm, adjacency, ROW)
    a = N * (-2.0 * mu)
    s = dist.s
    y = dist.y

    def step(lam):
        el = dist.forward(lam)
        c = lam * matmul(dist.E.T, y / (el + EPS))
        if mu == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                new = c / s
            return _keep_where_unobserved(new, lam, s)
        b = (N * lam + matmul(G, lam)) * mu - s
        with np.errstate(divide="ignore", invalid="ignore"):
            root = (-b - np.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
            linear = -c / b
        # an isolated pixel (degree 0) has a linear surrogate
        out = root.copy()
        out.data = np.where(a.local == 0, linear.local, root.local)
        return out

    def objective(lam):
        dl = dist.dlam(lam)
        return -dist.loglik(lam) + mu / 2.0 * float(np.sum(dl * dl))

    return mm_drive(step, objective, lam, config, callback=callback)


def _keep_where_unobserved(new, old, s):
    # pixels no chord sees have E'1 = 0; the likelihood ignores them
    out = new.copy()
    out.data = np.where(s.local == 0, old.local, new.local)
    return out


# TV-penalized primal-dual -----------------------------------------------------------


class _StackedDual(ProxFn):
    """f(z, w) = -sum y_i log z_i + rho ||w||_1 on the stacked vector [z; w]."""

    kind = "stacked"

    def __init__(self, y, rho, d):
        self.z = NegLog(y.reshape(-1, 1))
        self.w = L1(rho)
        self.d = d

    def prox(self, v, gamma=1.0):
        return np.vstack([self.z.prox(v[:self.d], gamma), self.w.prox(v[self.d:], gamma)])

    def value(self, v):
        return self.z.value(v[:self.d]) + self.w.value(v[self.d:])


class _PositiveLinear(ProxFn):
    """g(lambda) = 1'E lambda + indicator(lambda >= 0); prox is P+(v - tau E'1)."""

    kind = "positive_linear"

    def __init__(self, s):
        self.s = s

    def prox(self, v, gamma=1.0):
        return np.maximum(v - gamma * self.s, 0.0)

    def value(self, lam):
        if np.any(lam.local < 0):
            inner_val = np.inf
        else:
            inner_val = float(np.sum(self.s.local * lam.local))
        return lam.comm.all_reduce_scalar(inner_val)


def stacked_operator(dist):
    """K = [E; D] acting on [p] x 1 columns; K lambda is a replicated numpy column."""
    d = dist.d

    def forward(lam):
        ez = matmul(dist.E, lam).local
        if dist.D is None:
            return np.array(ez)
        return np.vstack([ez, matmul(dist.D, lam).local])

    def adjoint(u):
        ez = matmul(dist.E.T, distribute(dist.comm, u[:d], REPL))
        if dist.D is None:
            return ez
        return ez + matmul(dist.D.T, distribute(dist.comm, u[d:], REPL))

    def new_domain(rng):
        return create(dist.comm, dist.p, 1, ROW, "normal", seed=int(rng.integers(2**31)))

    return LinearOperator(forward, adjoint, (dist.d + dist.e, dist.p), new_domain)


def tv_objective(dist, rho):
    def objective(lam):
        return -dist.loglik(lam) + rho * float(np.sum(np.abs(dist.dlam(lam))))

    return objective


def pet_steps(op, sigma=None, tau=None, seed=0):
    """Default steps 1/3 each when sigma tau ||K||^2 < 1 holds for them,
    otherwise 0.95 / ||K||; explicit steps are validated."""
    from ..optim import power_iteration

    norm = power_iteration(op, tol=1e-10, seed=seed)
    if sigma is None and tau is None:
        if DEFAULT_STEP * DEFAULT_STEP * norm**2 < 1.0:
            sigma = tau = DEFAULT_STEP
    sigma, tau, _ = pdhg_steps(op, sigma, tau, opnorm=norm)
    return sigma, tau, norm


def _tv_setup(comm, problem, rho, sigma, tau, config):
    if rho < 0:
        raise ContractError("TV penalty must be nonnegative")
    dist = _Dist(comm, problem)
    op = stacked_operator(dist)
    sigma, tau, norm = pet_steps(op, sigma, tau, config.seed)
    f = _StackedDual(problem.y, rho, dist.d)
    g = _PositiveLinear(dist.s)
    lam0 = dist.ones()
    y0 = np.vstack([-np.ones((dist.d, 1)), np.zeros((dist.e, 1))])
    return dist, op, f, g, lam0, y0, sigma, tau, norm


def pet_pdhg_tv(comm, problem, rho=0.0, config=None, sigma=None, tau=None, form="primal",
                callback=None):
    """min -L(lambda) + rho ||D lambda||_1 over lambda >= 0 by primal-dual splitting.

    ``form="primal"`` updates the duals (z, w) first and extrapolates lambda;
    ``form="dual"`` updates lambda first and extrapolates (z, w).
    Returns ``(lambda, trace)``.
    """
    config = config or SolverConfig()
    dist, op, f, g, lam0, y0, sigma, tau, norm = _tv_setup(comm, problem, rho, sigma, tau,
                                                           config)
    solver = {"primal": pdhg, "dual": pdhg_dual}[form]
    lam, _, trace = solver(op, f, g, lam0, y0, sigma=sigma, tau=tau, config=config,
                           opnorm=norm, objective=lambda st: tv_objective(dist, rho)(st.x),
                           callback=callback)
    return lam, trace


def pet_spdhg_tv(comm, problem, pi, rho=0.0, config=None, sigma=None, tau=None,
                 callback=None):
    """Stochastic dual-form PDHG: each count coordinate z_i is refreshed with
    probability ``pi`` (the TV duals w always are) and the z extrapolation
    is debiased by 1/pi."""
    config = config or SolverConfig()
    dist, op, f, g, lam0, y0, sigma, tau, norm = _tv_setup(comm, problem, rho, sigma, tau,
                                                           config)
    sampled = np.zeros(y0.shape, dtype=bool)
    sampled[:dist.d] = True
    lam, _, trace = stochastic_pdhg(op, f, g, lam0, pi, y0, sigma=sigma, tau=tau,
                                    config=config, opnorm=norm,
                                    objective=lambda st: tv_objective(dist, rho)(st.x),
                                    callback=callback, sampled=sampled)
    return lam, trace


def pet_objective(comm, problem, lam, mu=0.0, rho=0.0):
    """-L(lambda) + (mu/2) ||D lambda||^2 + rho ||D lambda||_1 for a DistMatrix lambda."""
    dist = _Dist(comm, problem)
    dl = dist.dlam(lam)
    return -dist.loglik(lam) + mu / 2.0 * float(np.sum(dl * dl)) + rho * float(np.sum(np.abs(dl)))
