"""SPMD distributed matrices, parallel optimization and statistical applications."""

from . import apps, autodiff, comm, distmat, optim, prox
from .comm import local_comm, spawn_world
from .distmat import COL, REPL, ROW, DistMatrix, create, gather_full, matmul

__version__ = "0.1.0"

__all__ = [
    "COL", "REPL", "ROW", "DistMatrix", "apps", "autodiff", "comm", "create", "distmat",
    "gather_full", "local_comm", "matmul", "optim", "prox", "spawn_world",
]
