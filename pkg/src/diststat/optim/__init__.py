"""Iterative solvers, the MM driver and the stopping protocol."""

from .base import (
    MM_SLACK,
    IterationTrace,
    LinearOperator,
    Monitor,
    Objective,
    SolverConfig,
    relative_change,
    vdot,
    vnorm,
)
from .power import power_iteration
from .solvers import (
    admm,
    batch_gradient,
    check_pdhg_steps,
    consensus_admm,
    minibatch_sgd,
    mm_drive,
    parallel_prox_linear_cd,
    pdhg,
    pdhg_dual,
    pdhg_steps,
    proximal_gradient,
    stochastic_pdhg,
)

__all__ = [
    "MM_SLACK",
    "IterationTrace",
    "LinearOperator",
    "Monitor",
    "Objective",
    "SolverConfig",
    "admm",
    "batch_gradient",
    "check_pdhg_steps",
    "consensus_admm",
    "minibatch_sgd",
    "mm_drive",
    "parallel_prox_linear_cd",
    "pdhg",
    "pdhg_dual",
    "pdhg_steps",
    "power_iteration",
    "proximal_gradient",
    "relative_change",
    "stochastic_pdhg",
    "vdot",
    "vnorm",
]
