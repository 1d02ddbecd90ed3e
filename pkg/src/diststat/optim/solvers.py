"""Iterative solvers.

Every solver runs SPMD: vectors are numpy arrays (replicated, identical on
all ranks) or DistMatrix columns, and every scalar that steers control flow
is collectively reduced, so all ranks take the same branches.
"""

from types import SimpleNamespace

import numpy as np

from ..errors import ConfigError, ContractError
from .base import LinearOperator, Monitor, SolverConfig, vnorm
from .power import power_iteration


def _config(config):
    return config if config is not None else SolverConfig()


def _has_prox(g):
    return hasattr(g, "prox")


# proximal gradient ---------------------------------------------------------------


def proximal_gradient(g, f, x0, step=None, config=None, callback=None):
    """x <- prox_{step f}(x - step grad g(x)).

    ``step`` defaults to 1/L.  Steps up to 2/L are accepted as an explicit
    override; the descent guarantee (and the monotonicity check) needs 1/L.
    """
    config = _config(config)
    if g.gradient is None:
        raise ContractError("proximal gradient needs the gradient of the smooth term")
    lip = g.lipschitz
    if step is None:
        if lip is None:
            raise ConfigError("no step given and no Lipschitz constant to derive one")
        step = 1.0 / lip
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    if lip is not None and step > 2.0 / lip:
        raise ConfigError(f"step {step} exceeds 2/L = {2.0 / lip}")
    monotone = lip is not None and step <= 1.0 / lip * (1 + 1e-12)

    def objective(x):
        return g.value(x) + f.value(x)

    mon = Monitor(config, objective, monotone=monotone)
    x = x0
    mon.start(x)
    n = 0
    for n in range(1, config.max_iters + 1):
        x = f.prox(x - step * g.gradient(x), step)
        if callback is not None:
            callback(n, x)
        if mon.update(n, x):
            break
    return x, mon.finish(n, x)


# primal-dual hybrid gradient -------------------------------------------------------


def check_pdhg_steps(sigma, tau, opnorm):
    """Reject steps violating sigma * tau * ||K||^2 < 1."""
    if sigma <= 0 or tau <= 0:
        raise ConfigError(f"steps must be positive, got sigma={sigma}, tau={tau}")
    prod = sigma * tau * opnorm**2
    if not prod < 1.0:
        raise ConfigError(
            f"step sizes violate sigma*tau*||K||^2 < 1 (sigma={sigma}, tau={tau}, "
            f"||K||={opnorm}, product={prod})"
        )


def pdhg_steps(op, sigma=None, tau=None, opnorm=None, seed=0):
    """Resolve and validate PDHG step sizes; auto steps are 0.95/||K|| each."""
    if opnorm is None:
        opnorm = power_iteration(op, tol=1e-10, seed=seed)
    if sigma is None and tau is None:
        sigma = tau = 0.95 / opnorm
    elif sigma is None:
        sigma = 0.95**2 / (tau * opnorm**2)
    elif tau is None:
        tau = 0.95**2 / (sigma * opnorm**2)
    check_pdhg_steps(sigma, tau, opnorm)
    return sigma, tau, opnorm


def _primal_step(g, x, tau, kty):
    if _has_prox(g):
        return g.prox(x - tau * kty, tau)
    if getattr(g, "gradient", None) is None:
        raise ContractError("g must be proximable or have a gradient")
    return x - tau * (g.gradient(x) + kty)


def _g_value(g, x):
    return g.value(x)


def _default_objective(op, f, g):
    def objective(state):
        return f.value(op.forward(state.x)) + _g_value(g, state.x)

    return objective


def pdhg(op, f, g, x0, y0=None, sigma=None, tau=None, config=None, opnorm=None,
         objective=None, callback=None):
    """Minimize f(Kx) + g(x) by the primal-dual iteration

        y+ = prox_{sigma f*}(y + sigma K xbar)
        x+ = prox_{tau g}(x - tau K^T y+)      (or a gradient step on g)
        xbar+ = 2 x+ - x

    Returns ``(x, y, trace)``; the trace carries primal and dual KKT residuals.
    """
    config = _config(config)
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    sigma, tau, _ = pdhg_steps(op, sigma, tau, opnorm, config.seed)
    if y0 is None:
        y0 = op.forward(x0) * 0.0
    objective = objective or _default_objective(op, f, g)
    st = SimpleNamespace(x=x0, y=y0, xbar=x0, x_prev=x0, y_prev=y0, xbar_prev=x0)

    def residuals(s):
        dx = s.x_prev - s.x
        primal = dx * (1.0 / tau)
        if not _has_prox(g):
            primal = primal + g.gradient(s.x) - g.gradient(s.x_prev)
        dual = (s.y_prev - s.y) * (1.0 / sigma) + op.forward(s.xbar_prev - s.x)
        return {"primal_residual": vnorm(primal), "dual_residual": vnorm(dual)}

    mon = Monitor(config, objective, residuals=residuals)
    mon.start(st)
    n = 0
    for n in range(1, config.max_iters + 1):
        y_new = f.prox_conjugate(st.y + sigma * op.forward(st.xbar), sigma)
        x_new = _primal_step(g, st.x, tau, op.adjoint(y_new))
        st.x_prev, st.y_prev, st.xbar_prev = st.x, st.y, st.xbar
        st.xbar = 2.0 * x_new - st.x
        st.x, st.y = x_new, y_new
        if callback is not None:
            callback(n, st)
        if mon.update(n, st):
            break
    return st.x, st.y, mon.finish(n, st)


def _dual_form(op, f, g, x0, y0, sigma, tau, config, objective, callback, sampler):
    if y0 is None:
        y0 = op.forward(x0) * 0.0
    objective = objective or _default_objective(op, f, g)
    st = SimpleNamespace(x=x0, y=y0, ybar=y0, x_prev=x0, y_prev=y0, ybar_prev=y0)

    def residuals(s):
        primal = (s.x_prev - s.x) * (1.0 / tau) - op.adjoint(s.ybar_prev - s.y)
        if not _has_prox(g):
            primal = primal + g.gradient(s.x) - g.gradient(s.x_prev)
        dual = (s.y_prev - s.y) * (1.0 / sigma)
        return {"primal_residual": vnorm(primal), "dual_residual": vnorm(dual)}

    mon = Monitor(config, objective, residuals=residuals)
    mon.start(st)
    n = 0
    for n in range(1, config.max_iters + 1):
        x_new = _primal_step(g, st.x, tau, op.adjoint(st.ybar))
        cand = f.prox_conjugate(st.y + sigma * op.forward(x_new), sigma)
        if sampler is None:
            y_new = cand
            ybar = y_new + (y_new - st.y)
        else:
            mask, scale = sampler()
            y_new = np.where(mask, cand, st.y)
            ybar = y_new + (y_new - st.y) * scale
        st.x_prev, st.y_prev, st.ybar_prev = st.x, st.y, st.ybar
        st.x, st.y, st.ybar = x_new, y_new, ybar
        if callback is not None:
            callback(n, st)
        if mon.update(n, st):
            break
    return st.x, st.y, mon.finish(n, st)


def pdhg_dual(op, f, g, x0, y0=None, sigma=None, tau=None, config=None, opnorm=None,
              objective=None, callback=None):
    """Dual-form primal-dual iteration:

        x+ = prox_{tau g}(x - tau K^T ybar)
        y+ = prox_{sigma f*}(y + sigma K x+)
        ybar+ = y+ + (y+ - y)
    """
    config = _config(config)
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    sigma, tau, _ = pdhg_steps(op, sigma, tau, opnorm, config.seed)
    return _dual_form(op, f, g, x0, y0, sigma, tau, config, objective, callback, None)


def stochastic_pdhg(op, f, g, x0, pi, y0=None, sigma=None, tau=None, config=None,
                    opnorm=None, objective=None, callback=None, sampled=None):
    """Dual-form iteration in which each dual coordinate (of those flagged in
    ``sampled``, default all) is updated with probability ``pi`` and the
    extrapolation is debiased by 1/pi.  Sampling uses ``config.seed`` on
    every rank, so all ranks draw the same coordinates.  The dual variable
    must be a numpy array.
    """
    config = _config(config)
    if not 0 < pi <= 1:
        raise ConfigError(f"sampling probability must lie in (0, 1], got {pi}")
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    sigma, tau, _ = pdhg_steps(op, sigma, tau, opnorm, config.seed)
    if y0 is None:
        y0 = op.forward(x0) * 0.0
    if not isinstance(y0, np.ndarray):
        raise ContractError("stochastic PDHG needs a numpy dual variable")
    if sampled is None:
        sampled = np.ones(y0.shape, dtype=bool)
    sampled = np.broadcast_to(np.asarray(sampled, dtype=bool), y0.shape)
    scale = np.where(sampled, 1.0 / pi, 1.0)
    rng = np.random.default_rng(config.seed)

    def sampler():
        draw = rng.random(y0.shape) < pi
        return draw | ~sampled, scale

    return _dual_form(op, f, g, x0, y0, sigma, tau, config, objective, callback, sampler)


# ADMM ---------------------------------------------------------------------------


def admm(op, f, solve_x, t, x0, config=None, g=None, objective=None, callback=None):
    """ADMM for f(Kx) + g(x).

    ``solve_x(a, t)`` must return argmin_x g(x) + (t/2) ||Kx - a||^2.  The
    trace reports the primal residual ||Kx - xt|| and the dual residual
    t ||K^T (xt - xt_prev)||.
    """
    config = _config(config)
    if t <= 0:
        raise ConfigError(f"penalty t must be positive, got {t}")
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    xt = op.forward(x0)
    y = xt * 0.0
    st = SimpleNamespace(x=x0, xt=xt, y=y, primal=0.0, dual=0.0)
    if objective is None:
        def objective(s):
            val = f.value(op.forward(s.x))
            return val + (g.value(s.x) if g is not None else 0.0)

    mon = Monitor(config, objective,
                  residuals=lambda s: {"primal_residual": s.primal, "dual_residual": s.dual})
    mon.start(st)
    n = 0
    for n in range(1, config.max_iters + 1):
        x = solve_x(st.xt - st.y / t, t)
        kx = op.forward(x)
        xt_new = f.prox(kx + st.y / t, 1.0 / t)
        y = st.y + t * (kx - xt_new)
        st.primal = vnorm(kx - xt_new)
        st.dual = t * vnorm(op.adjoint(xt_new - st.xt))
        st.x, st.xt, st.y = x, xt_new, y
        if callback is not None:
            callback(n, st)
        if mon.update(n, st):
            break
    return st.x, mon.finish(n, st)


def consensus_admm(comm, solve_local, op, f, t, x0, config=None, local_value=None,
                   callback=None):
    """Consensus ADMM over the ranks of ``comm``; rank k owns g_k.

    ``solve_local(a, b, t)`` returns
    argmin_x g_k(x) + (t/2) ||Kx - a||^2 + (t/2) ||x - b||^2.
    Each round: local solves, reduce of K x_k + y_k / t to rank 0, prox
    there, broadcast of xt, then the consensus average and the dual updates.
    """
    config = _config(config)
    if t <= 0:
        raise ConfigError(f"penalty t must be positive, got {t}")
    if not isinstance(op, LinearOperator):
        op = LinearOperator.from_matrix(op)
    d = comm.world_size
    x = np.array(x0, dtype=float)
    xk = x.copy()
    xt = np.asarray(op.forward(x), dtype=float)
    yk = np.zeros_like(xt)
    wk = np.zeros_like(x)
    st = SimpleNamespace(x=x, xk=xk, xt=xt, yk=yk, wk=wk, consensus=0.0)

    def objective(s):
        local = local_value(s.x) if local_value is not None else 0.0
        return f.value(op.forward(s.x)) + comm.all_reduce_scalar(local)

    mon = Monitor(config, objective, residuals=lambda s: {"consensus_residual": s.consensus})
    mon.start(st)
    n = 0
    for n in range(1, config.max_iters + 1):
        xk = np.asarray(solve_local(st.xt - st.yk / t, st.x - st.wk / t, t), dtype=float)
        kxk = np.asarray(op.forward(xk), dtype=float)
        total = comm.reduce(kxk + st.yk / t, root=0)
        if comm.rank == 0:
            xt = np.asarray(f.prox(total.reshape(kxk.shape) / d, 1.0 / (d * t)), dtype=float)
        else:
            xt = None
        xt = comm.broadcast(xt, root=0).reshape(kxk.shape)
        x_new = (comm.all_reduce(xk + st.wk / t) / d).reshape(xk.shape)
        st.yk = st.yk + t * (kxk - xt)
        st.wk = st.wk + t * (xk - x_new)
        norms = comm.all_gather(np.array([np.linalg.norm(xk - x_new)]))
        st.consensus = float(np.max(norms))
        st.x, st.xk, st.xt = x_new, xk, xt
        if callback is not None:
            callback(n, st)
        if mon.update(n, st):
            break
    return st.x, mon.finish(n, st)


# coordinate and stochastic methods ---------------------------------------------------


def parallel_prox_linear_cd(g, f, x0, steps, block=None, sampling="uniform", config=None,
                            callback=None):
    """Update a subset of ``block`` coordinates in parallel by the prox-linear map

        x_i <- prox_{gamma_i f}(x_i - gamma_i dg/dx_i),  i in the sampled subset.

    ``sampling`` is ``uniform`` (random subset without replacement) or
    ``cyclic`` (consecutive blocks).  ``f`` must be separable.
    """
    config = _config(config)
    if g.gradient is None:
        raise ContractError("prox-linear updates need partial derivatives of g")
    x = np.array(x0, dtype=float)
    p = x.size
    s = p if block is None else int(block)
    if not 1 <= s <= p:
        raise ConfigError(f"block size must lie in [1, {p}], got {s}")
    if sampling not in ("uniform", "cyclic"):
        raise ConfigError(f"unknown sampling {sampling!r}")
    gam = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    if np.any(gam <= 0):
        raise ConfigError("coordinate steps must be positive")
    rng = np.random.default_rng(config.seed)

    def objective(v):
        return g.value(v) + f.value(v)

    mon = Monitor(config, objective)
    mon.start(x)
    n = 0
    for n in range(1, config.max_iters + 1):
        if sampling == "uniform":
            idx = rng.choice(p, size=s, replace=False)
        else:
            idx = (np.arange(s) + (n - 1) * s) % p
        cand = f.prox(x - gam * g.gradient(x), gam)
        x = x.copy()
        x[idx] = cand[idx]
        if callback is not None:
            callback(n, x)
        if mon.update(n, x):
            break
    return x, mon.finish(n, x)


def batch_gradient(a, dloss, x, idx):
    """(1/|B|) sum_{i in B} l'(a_i^T x) a_i for the batch ``idx``."""
    ab = a[idx]
    return ab.T @ dloss(ab @ x, idx) / len(idx)


def minibatch_sgd(a, dloss, x0, batch_size, step, config=None, loss=None, callback=None):
    """x <- x - gamma_n (1/b) sum_{i in B_n} l'(a_i^T x) a_i.

    ``dloss(u, idx)`` gives l_i'(u_i) for the samples ``idx``; ``loss(u, idx)``
    (optional) the per-sample losses for the traced mean objective.  ``step``
    is a constant or a function of the iteration index n = 0, 1, ...  With
    ``batch_size == m`` every iteration uses all samples in order, i.e. full
    gradient descent.
    """
    config = _config(config)
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    b = int(batch_size)
    if not 1 <= b <= m:
        raise ConfigError(f"batch size must lie in [1, {m}], got {b}")
    schedule = step if callable(step) else (lambda n: step)
    rng = np.random.default_rng(config.seed)
    full = np.arange(m)

    def objective(v):
        if loss is None:
            return float("nan")
        return float(np.mean(loss(a @ v, full)))

    x = np.array(x0, dtype=float)
    mon = Monitor(config, objective)
    mon.start(x)
    n = 0
    for n in range(1, config.max_iters + 1):
        gamma = schedule(n - 1)
        if gamma <= 0:
            raise ConfigError(f"step must be positive, got {gamma} at iteration {n - 1}")
        idx = full if b == m else rng.choice(m, size=b, replace=False)
        x = x - gamma * batch_gradient(a, dloss, x, idx)
        if callback is not None:
            callback(n, x)
        if mon.update(n, x):
            break
    return x, mon.finish(n, x)


# MM driver -----------------------------------------------------------------------


def mm_drive(step, objective, x0, config=None, callback=None):
    """Iterate ``x <- step(x)`` where each step minimizes a majorizing surrogate.

    Recorded objective values must not increase by more than a 1e-10 relative
    slack; violations are logged and listed in ``trace.violations`` (or raise
    MonotonicityError with ``config.strict``).
    """
    config = _config(config)
    mon = Monitor(config, objective, monotone=True)
    x = x0
    mon.start(x)
    n = 0
    for n in range(1, config.max_iters + 1):
        x = step(x)
        if callback is not None:
            callback(n, x)
        if mon.update(n, x):
            break
    return x, mon.finish(n, x)
