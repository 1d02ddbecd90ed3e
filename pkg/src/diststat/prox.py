"""Closed-form proximity operators.

``prox(y, gamma)`` returns argmin_x f(x) + ||x - y||^2 / (2 gamma).  All
operators are componentwise, so they apply unchanged to numpy arrays and to
DistMatrix blocks (through numpy ufuncs) without communication.
"""

from dataclasses import dataclass

import numpy as np


def _check_gamma(gamma):
    if not np.all(np.asarray(gamma) > 0):
        raise ValueError(f"step must be positive, got {gamma}")


def soft_threshold(y, t):
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def _local(v):
    return v.local if hasattr(v, "comm") else v


def _sum_blockwise(fn, x, *params):
    """Sum of ``fn(x, *params)`` over all entries, reduced across ranks if needed."""
    out = float(np.sum(fn(np.asarray(_dense(_local(x))), *[_dense(_local(p)) for p in params])))
    if hasattr(x, "comm") and x.partition.value != "repl":
        out = x.comm.all_reduce_scalar(out)
    return out


def _dense(v):
    return v.toarray() if hasattr(v, "toarray") else v


class ProxFn:
    """Base class; subclasses implement ``prox`` and ``value``."""

    kind = "abstract"

    def prox(self, y, gamma=1.0):
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError

    def prox_conjugate(self, x, gamma=1.0):
        """prox of gamma f* by Moreau decomposition: x - gamma prox_{f/gamma}(x / gamma)."""
        _check_gamma(gamma)
        return x - gamma * self.prox(x / gamma, 1.0 / gamma)

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class L1(ProxFn):
    """lam * ||x||_1; lam may be a scalar or a per-coordinate weight array."""

    lam: object = 1.0
    kind = "l1"

    def __post_init__(self):
        if np.any(np.asarray(_local(self.lam)) < 0):
            raise ValueError("l1 weight must be nonnegative")

    def prox(self, y, gamma=1.0):
        _check_gamma(gamma)
        return soft_threshold(y, gamma * self.lam)

    def value(self, x):
        return _sum_blockwise(lambda v, lam: np.abs(v) * lam, x, self.lam)


@dataclass(frozen=True)
class NegLog(ProxFn):
    """-sum_i a_i log x_i.

    The prox is the positive root (y + sqrt(y^2 + 4 gamma a)) / 2.  A scalar
    a = 0 makes this the zero function and y is returned exactly; zero entries
    of a weight array keep the closed form, whose limit is max(y, 0).
    """

    a: object = 1.0
    kind = "neg_log"

    def __post_init__(self):
        if np.any(np.asarray(_local(self.a)) < 0):
            raise ValueError("neg_log weight must be nonnegative")

    def prox(self, y, gamma=1.0):
        _check_gamma(gamma)
        if np.isscalar(self.a) and self.a == 0:
            return y * 1.0
        return (y + np.sqrt(y * y + 4.0 * gamma * self.a)) / 2.0

    def value(self, x):
        if np.isscalar(self.a) and self.a == 0:
            return 0.0

        def terms(v, a):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = -a * np.log(v)
            return np.where(np.asarray(a) == 0, np.where(v < 0, np.inf, 0.0), t)

        return _sum_blockwise(terms, x, self.a)


@dataclass(frozen=True)
class NonNeg(ProxFn):
    """Indicator of the nonnegative orthant."""

    kind = "indicator_nonneg"

    def prox(self, y, gamma=1.0):
        _check_gamma(gamma)
        return np.maximum(y, 0.0)

    def value(self, x):
        bad = _sum_blockwise(lambda v: v < 0, x)
        return 0.0 if bad == 0 else np.inf


@dataclass(frozen=True)
class Box(ProxFn):
    """Indicator of the box [lo, hi]."""

    lo: float = 0.0
    hi: float = 1.0
    kind = "indicator_box"

    def __post_init__(self):
        if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
            raise ValueError("box needs lo <= hi")

    def prox(self, y, gamma=1.0):
        _check_gamma(gamma)
        return np.minimum(np.maximum(y, self.lo), self.hi)

    def value(self, x):
        bad = _sum_blockwise(lambda v: (v < self.lo) | (v > self.hi), x)
        return 0.0 if bad == 0 else np.inf


@dataclass(frozen=True)
class Zero(ProxFn):
    kind = "zero"

    def prox(self, y, gamma=1.0):
        _check_gamma(gamma)
        return y * 1.0

    def prox_conjugate(self, x, gamma=1.0):
        # the conjugate is the indicator of {0}; skip the roundoff of the decomposition
        _check_gamma(gamma)
        return x * 0.0

    def value(self, x):
        return 0.0


def l1(lam=1.0):
    return L1(lam)


def neg_log(a=1.0):
    return NegLog(a)


def indicator_nonneg():
    return NonNeg()


def indicator_box(lo, hi):
    return Box(lo, hi)


def zero():
    return Zero()


def prox(f, y, gamma=1.0):
    return f.prox(y, gamma)


def prox_conjugate(f, x, gamma=1.0):
    return f.prox_conjugate(x, gamma)
