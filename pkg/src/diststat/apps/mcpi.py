"""Monte Carlo estimate of pi from points uniform on the unit square."""

import numpy as np


def uniform_square(rng, n):
    return rng.random(n), rng.random(n)


def mc_pi(comm, n, seed=0, sampler=uniform_square):
    """Each rank draws ``n`` points with seed ``seed + rank`` and forms
    4 * (share with x^2 + y^2 < 1); the ranks' estimates are averaged by an
    all-reduce, so every rank returns the same value."""
    if n < 1:
        raise ValueError("need at least one point per worker")
    x, y = sampler(comm.rng(seed), n)
    inside = np.count_nonzero(np.asarray(x) ** 2 + np.asarray(y) ** 2 < 1.0)
    local = 4.0 * inside / n
    return comm.all_reduce_scalar(local) / comm.world_size
