"""Deterministic synthetic data files."""

import os

import numpy as np

from ..apps.pet import PetProblem, pet_toy
from ..distmat.io import read_dstm, write_dstm

KINDS = ("uniform", "normal", "pet_toy", "mds_points")


def gen_data(kind, dims, seed, path):
    """Write synthetic data and return the list of files written.

    ``uniform`` / ``normal``: one rows x cols matrix at ``path``.
    ``mds_points``: q x dim standard-normal points at ``path``.
    ``pet_toy``: dims = (g, n_d); ``path`` is a directory receiving E, D, y
    and the true image lambda, each as DSTM.
    """
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        rows, cols = dims
        write_dstm(path, rng.uniform(0.0, 1.0, size=(rows, cols)))
        return [path]
    if kind in ("normal", "mds_points"):
        rows, cols = dims
        write_dstm(path, rng.standard_normal((rows, cols)))
        return [path]
    if kind == "pet_toy":
        g, n_d = dims
        prob, lam = pet_toy(g, n_d, seed=seed)
        os.makedirs(path, exist_ok=True)
        files = {
            "E": prob.E.toarray(),
            "D": prob.D.toarray(),
            "y": prob.y.reshape(-1, 1),
            "lambda": lam.reshape(-1, 1),
        }
        out = []
        for name, mat in files.items():
            fn = os.path.join(path, f"{name}.dstm")
            write_dstm(fn, mat)
            out.append(fn)
        return out
    raise ValueError(f"unknown data kind {kind!r}; choose from {', '.join(KINDS)}")


def load_pet(path):
    """Read a directory written by ``gen_data('pet_toy', ...)``."""
    E = read_dstm(os.path.join(path, "E.dstm"))
    D = read_dstm(os.path.join(path, "D.dstm"))
    y = read_dstm(os.path.join(path, "y.dstm")).reshape(-1)
    return PetProblem(E, D, y, int(round(np.sqrt(E.shape[1]))))
