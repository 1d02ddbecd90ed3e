"""Solver plumbing: objectives, linear operators, configs, traces and the stopping rule."""

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..distmat import DistMatrix, inner, matmul
from ..errors import MonotonicityError

log = logging.getLogger(__name__)

MM_SLACK = 1e-10


@dataclass
class Objective:
    """A smooth term: value, optional gradient and optional Lipschitz constant."""

    value: Callable
    gradient: Optional[Callable] = None
    lipschitz: Optional[float] = None


@dataclass
class LinearOperator:
    """K of shape (l, p) given by its action and its adjoint's action."""

    forward: Callable
    adjoint: Callable
    shape: tuple
    new_domain: Optional[Callable] = None

    def random_domain(self, rng):
        if self.new_domain is not None:
            return self.new_domain(rng)
        return rng.standard_normal(self.shape[1])

    @classmethod
    def from_matrix(cls, m):
        """Wrap a dense array, a scipy sparse matrix or a DistMatrix."""
        if isinstance(m, DistMatrix):
            from ..distmat import COL, REPL, ROW, create, replicated

            # domain layout that makes both K x and K^T y valid scenarios
            domain = {ROW: REPL, COL: ROW, REPL: REPL}[m.partition]
            mt = m.T

            def new_domain(rng):
                seed = int(rng.integers(2**31))
                return create(m.comm, m.shape[1], 1, domain, "normal", seed=seed)

            if m.partition is REPL:
                block = m.local
                return cls(
                    forward=lambda x: replicated(m.comm, block @ x.local),
                    adjoint=lambda y: replicated(m.comm, block.T @ y.local),
                    shape=m.shape,
                    new_domain=new_domain,
                )
            return cls(
                forward=lambda x: matmul(m, x),
                adjoint=lambda y: matmul(mt, y),
                shape=m.shape,
                new_domain=new_domain,
            )
        if not sp.issparse(m):
            m = np.asarray(m, dtype=float)
        mt = m.T
        return cls(forward=lambda x: m @ x, adjoint=lambda y: mt @ y, shape=m.shape)

    @classmethod
    def identity(cls, n):
        return cls(forward=lambda x: x * 1.0, adjoint=lambda y: y * 1.0, shape=(n, n))


@dataclass
class SolverConfig:
    max_iters: int = 1000
    eval_every: int = 100
    tol: float = 1e-5
    seed: int = 0
    strict: bool = False
    timing: bool = True

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


@dataclass
class IterationTrace:
    """Objective values recorded once per evaluation window."""

    iters: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    converged: bool = False

    def record(self, it, objective, seconds=0.0, **extras):
        if self.iters and it <= self.iters[-1]:
            raise ValueError(f"trace iterations must increase ({it} after {self.iters[-1]})")
        self.iters.append(int(it))
        self.objectives.append(float(objective))
        self.seconds.append(float(seconds))
        for key, val in extras.items():
            self.extras.setdefault(key, []).append(float(val))

    def __len__(self):
        return len(self.iters)

    @property
    def final(self):
        return self.objectives[-1]

    def rows(self):
        return list(zip(self.iters, self.objectives, self.seconds))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "seconds"])
            for it, obj, sec in self.rows():
                w.writerow([it, repr(obj), repr(sec)])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["iter", "objective", "seconds"]:
                raise ValueError(f"unexpected trace header {header}")
            for it, obj, sec in reader:
                trace.record(int(it), float(obj), float(sec))
        return trace


def relative_change(f_new, f_old):
    return abs(f_new - f_old) / (abs(f_new) + 1.0)


class Monitor:
    """Evaluates the objective every ``eval_every`` iterations and applies the
    stopping rule |f_n - f_{n-k}| / (|f_n| + 1) < tol between consecutive
    evaluations.  With ``monotone=True`` each recorded value is also checked
    against the previous one with a small relative slack.
    """

    def __init__(self, config, objective, monotone=False, residuals=None):
        self.config = config
        self.objective = objective
        self.monotone = monotone
        self.residuals = residuals
        self.trace = IterationTrace()
        self._t0 = time.perf_counter()

    def _elapsed(self):
        return time.perf_counter() - self._t0 if self.config.timing else 0.0

    def _record(self, it, state):
        f = float(self.objective(state))
        extras = self.residuals(state) if self.residuals is not None else {}
        trace = self.trace
        if self.monotone and trace.objectives:
            prev = trace.objectives[-1]
            if (f - prev) / (abs(prev) + 1.0) > MM_SLACK:
                trace.violations.append(it)
                msg = f"objective increased at iteration {it}: {prev!r} -> {f!r}"
                if self.config.strict:
                    raise MonotonicityError(msg)
                log.warning(msg)
        trace.record(it, f, self._elapsed(), **extras)
        return f

    def start(self, state):
        self._t0 = time.perf_counter()
        self._record(0, state)

    def update(self, it, state):
        """Call after iteration ``it``; returns True when the run should stop."""
        if it % self.config.eval_every:
            return False
        f = self._record(it, state)
        prev = self.trace.objectives[-2]
        if relative_change(f, prev) < self.config.tol:
            self.trace.converged = True
            return True
        return False

    def finish(self, it, state):
        if self.trace.iters[-1] != it:
            self._record(it, state)
        return self.trace


def vdot(a, b):
    if isinstance(a, DistMatrix) or isinstance(b, DistMatrix):
        return inner(a, b)
    return float(np.sum(np.asarray(a) * np.asarray(b)))


def vnorm(a):
    return float(np.sqrt(max(vdot(a, a), 0.0)))
