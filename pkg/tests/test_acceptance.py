"""Acceptance suite: one test per criterion, each printing a pass/fail line."""

import time

import numpy as np

from conftest import ACCEPTANCE, run, run0
from diststat import autodiff
from diststat.apps import (
    cox_data,
    cox_gradient,
    cox_l1,
    cox_lipschitz,
    initial_embedding,
    log_partial_likelihood,
    mc_pi,
    mds_fit,
    mds_problem,
    mds_step,
    nmf_apg,
    nmf_multiplicative,
    nmf_problem,
    pairwise_distances,
    pet_mm_ridge,
    pet_pdhg_tv,
    pet_spdhg_tv,
    pet_toy,
)
from diststat.apps.pet import PetProblem
from diststat.comm import local_comm
from diststat.distmat import ROW, SCENARIOS, create, distribute, gather_full, matmul
from diststat.errors import ConfigError
from diststat.harness import main
from diststat.optim import Objective, SolverConfig, admm, consensus_admm, proximal_gradient
from diststat.prox import l1

SLACK = 1e-10


def record(n, passed, detail):
    line = (f"criterion {n}", bool(passed), detail)
    ACCEPTANCE.append(line)
    print(f"{line[0]}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def max_violation(objs):
    """Largest relative increase between consecutive objective values."""
    objs = np.asarray(objs, dtype=float)
    rises = (objs[1:] - objs[:-1]) / np.maximum(np.abs(objs[:-1]), 1e-300)
    return float(max(rises.max(initial=0.0), 0.0))


# 1. matmul oracle suite --------------------------------------------------------------


def _scenario(comm, sid, p, r, q, seed):
    pa, pb, po, _ = SCENARIOS[sid]
    a = create(comm, p, r, pa, "normal", seed=seed)
    b = create(comm, r, q, pb, "normal", seed=seed + 1)
    c = matmul(a, b, out=po)
    return c.partition is po, gather_full(c), gather_full(a), gather_full(b)


def test_criterion_1_matmul_oracle():
    t0 = time.perf_counter()
    worst, layouts = 0.0, True
    sizes = np.arange(8, 65, 4)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        for sid in sorted(SCENARIOS):
            p, r, q = rng.choice(sizes, 3)
            for world in (1, 2, 4):
                ok, c, a, b = run0(world, _scenario, sid, int(p), int(r), int(q), 10 * seed)
                ref = a @ b
                worst = max(worst, float(np.max(np.abs(c - ref)) / np.max(np.abs(ref))))
                layouts &= ok
    secs = time.perf_counter() - t0
    record(1, layouts and worst <= 1e-12 and secs < 30,
           f"165 runs, max rel err {worst:.2e}, {secs:.1f} s")


# 2. automatic differentiation -------------------------------------------------------


def test_criterion_2_autodiff():
    g = autodiff.example_graph()
    rev = autodiff.reverse_mode(g, [3.0, 2.0])
    fwd = np.array([autodiff.forward_mode(g, [3.0, 2.0], i) for i in range(2)])
    want = np.array([0.2, -3.8])
    exact = all(np.all(np.abs(v - want) <= np.abs(np.spacing(want))) for v in (rev, fwd))
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        graph = autodiff.random_graph(rng)
        x = rng.uniform(0.5, 1.5, 2)
        fd = autodiff.finite_difference(graph, x)
        for grad in (autodiff.reverse_mode(graph, x),
                     [autodiff.forward_mode(graph, x, i) for i in range(2)]):
            worst = max(worst, float(np.max(np.abs(np.asarray(grad) - fd)
                                            / np.maximum(np.abs(fd), 1.0))))
    record(2, exact and worst <= 1e-6,
           f"example grad {tuple(float(v) for v in rev)}, 50 graphs worst fd rel err {worst:.1e}")


# 3. MM descent ---------------------------------------------------------------------


def _mm_traces(comm):
    every = SolverConfig(max_iters=500, eval_every=1, tol=0)
    out = {}
    out["nmf"] = nmf_multiplicative(nmf_problem(comm, 20, 20, 3, seed=0), every)[2]
    out["pet"] = pet_mm_ridge(comm, pet_toy(4, 16, seed=0)[0], mu=0.1, config=every)[1]
    prob, _ = mds_problem(comm, 30, 2, seed=0)
    out["mds"] = mds_fit(prob, initial_embedding(comm, 30, 2, seed=100), every)[1]
    out["cox"] = cox_l1(cox_data(comm, 50, 20, seed=0, lam=1e-3), config=every)[1]
    return out


def test_criterion_3_mm_descent():
    t0 = time.perf_counter()
    traces = run0(2, _mm_traces)
    secs = time.perf_counter() - t0
    viol = {k: max_violation(tr.objectives) for k, tr in traces.items()}
    iters = {k: tr.iters[-1] for k, tr in traces.items()}
    ok = all(v <= SLACK for v in viol.values()) and min(iters.values()) >= 500 and secs < 60
    record(3, ok, ", ".join(f"{k} {iters[k]} it viol {viol[k]:.1e}" for k in traces)
           + f", {secs:.1f} s")


# 4. Cox gradient and Lipschitz bound ----------------------------------------------


def _cox_checks(comm):
    data = cox_data(comm, 50, 20, seed=0, lam=1e-3)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(5):
        b = rng.standard_normal(20) * 0.3
        grad = gather_full(cox_gradient(data, distribute(comm, b.reshape(-1, 1), ROW)),
                           everywhere=True).ravel()
        fd = np.empty(20)
        for k in range(20):
            e = np.zeros(20)
            e[k] = 1e-6
            up = log_partial_likelihood(data, distribute(comm, (b + e).reshape(-1, 1), ROW))
            dn = log_partial_likelihood(data, distribute(comm, (b - e).reshape(-1, 1), ROW))
            fd[k] = (up - dn) / 2e-6
        worst = max(worst, float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0))))
    cfg = SolverConfig(max_iters=500, eval_every=1, tol=0)
    lip = cox_lipschitz(data, seed=cfg.seed)
    trace = cox_l1(data, config=cfg)[1]
    return worst, lip, gather_full(data.X, everywhere=True), trace


def test_criterion_4_cox_gradient():
    worst, lip, x, trace = run0(4, _cox_checks)
    ref = 2.0 * np.linalg.svd(x, compute_uv=False)[0] ** 2
    lip_err = abs(lip - ref) / ref
    step_ok = (1.0 / lip) <= (1.0 / ref) * (1 + 1e-6) and not trace.violations
    record(4, worst <= 1e-5 and lip_err <= 1e-6 and step_ok,
           f"fd rel err {worst:.1e}, Lipschitz rel err {lip_err:.1e}, "
           f"auto step {1 / lip:.4e} vs 1/L {1 / ref:.4e}")


# 5. PDHG vs MM maximum likelihood ---------------------------------------------------


def _ml_pair(comm, prob):
    mm = pet_mm_ridge(comm, prob, config=SolverConfig(max_iters=20000, tol=1e-15))[0]
    pd = pet_pdhg_tv(comm, prob, rho=0.0, config=SolverConfig(max_iters=20000, tol=0))[0]
    return gather_full(mm), gather_full(pd)


def test_criterion_5_pdhg_cross_validation():
    one = PetProblem(np.array([[1.0]]), np.zeros((0, 1)), np.array([5.0]))
    two = PetProblem(np.array([[0.6, 0.1], [0.3, 0.5], [0.1, 0.4]]), np.array([[-1.0, 1.0]]),
                     np.array([4.0, 7.0, 2.0]))
    worst = 0.0
    for prob in (one, two):
        mm, pd = run0(1, _ml_pair, prob)
        worst = max(worst, float(np.max(np.abs(mm - pd))))
    try:
        pet_pdhg_tv(local_comm(), two, sigma=2.0, tau=2.0)
        rejected = False
    except ConfigError:
        rejected = True
    record(5, worst <= 1e-6 and rejected,
           f"max |pdhg - mm| {worst:.1e}, violating steps rejected: {rejected}")


# 6. stochastic PDHG ------------------------------------------------------------------


def test_criterion_6_stochastic_reduction():
    prob, _ = pet_toy(4, 16, seed=0)
    comm = local_comm()
    cfg = SolverConfig(max_iters=200, eval_every=1, tol=0)
    a, ta = pet_pdhg_tv(comm, prob, rho=0.01, config=cfg, form="dual")
    b, tb = pet_spdhg_tv(comm, prob, 1.0, rho=0.01, config=cfg)
    bitwise = a.local.tobytes() == b.local.tobytes() and ta.objectives == tb.objectives
    ref = pet_pdhg_tv(comm, prob, rho=0.01, config=SolverConfig(max_iters=20000, tol=1e-12),
                      form="dual")[1].final
    sto = pet_spdhg_tv(comm, prob, 0.2, rho=0.01, config=SolverConfig(max_iters=100000))[1]
    rel = abs(sto.final - ref) / abs(ref)
    record(6, bitwise and sto.converged and rel <= 1e-3,
           f"pi=1 bitwise over 200 it: {bitwise}, pi=0.2 rel gap {rel:.1e} "
           f"after {sto.iters[-1]} it")


# 7. MDS recovery ---------------------------------------------------------------------


def _mds_recovery(comm):
    # stress is nonconvex; seed 1 with start seed 101 reaches the global minimum
    prob, _ = mds_problem(comm, 10, 2, seed=1)
    _, tr = mds_fit(prob, initial_embedding(comm, 10, 2, seed=101),
                    SolverConfig(max_iters=10000, eval_every=100, tol=0))
    theta = distribute(comm, np.array([[0.25, -1.5], [3.0, 0.5]]), ROW)
    fixed = mds_step(pairwise_distances(theta), theta)
    return tr.final, fixed.local.tobytes() == theta.local.tobytes()


def test_criterion_7_mds_recovery():
    final, fixed = run0(1, _mds_recovery)
    record(7, final < 1e-8 and fixed, f"stress {final:.1e} after 1e4 it, q=2 fixed point {fixed}")


# 8. ADMM and consensus ADMM -------------------------------------------------------


def test_criterion_8_admm():
    rng = np.random.default_rng(8)
    a, b, lam = rng.standard_normal((12, 4)), rng.standard_normal(12), 0.5
    ata, atb = a.T @ a, a.T @ b
    smooth = Objective(value=lambda x: 0.5 * float(np.sum((a @ x - b) ** 2)),
                       gradient=lambda x: a.T @ (a @ x - b),
                       lipschitz=float(np.linalg.norm(a, 2) ** 2))
    pg, _ = proximal_gradient(smooth, l1(lam), np.zeros(4),
                              config=SolverConfig(max_iters=50000, tol=0))
    ad, _ = admm(np.eye(4), l1(lam), lambda v, t: np.linalg.solve(ata + t * np.eye(4),
                                                                    atb + t * v),
                 1.0, np.zeros(4), config=SolverConfig(max_iters=5000, tol=0))
    admm_err = float(np.max(np.abs(ad - pg)))

    mu = 0.7

    class Ridge:
        def prox(self, v, gamma=1.0):
            return v / (1.0 + gamma * mu)

        def value(self, x):
            return 0.5 * mu * float(np.sum(x * x))

    def prog(comm):
        # every worker holds the same g_k = (1/2)||A x - b||^2
        def solve_local(u, v, t):
            return np.linalg.solve(ata + 2 * t * np.eye(4), atb + t * u + t * v)

        xks = []
        x, _ = consensus_admm(comm, solve_local, np.eye(4), Ridge(), 1.0, np.zeros(4),
                              config=SolverConfig(max_iters=3000, tol=0),
                              callback=lambda n, st: xks.append(st.xk.tobytes()))
        return x, xks

    out = run(4, prog)
    identical = all(out[r][1] == out[0][1] for r in range(1, 4))
    closed = np.linalg.solve(4 * ata + mu * np.eye(4), 4 * atb)
    cons_err = max(float(np.max(np.abs(x - closed))) for x, _ in out)
    record(8, admm_err <= 1e-6 and identical and cons_err <= 1e-6,
           f"admm vs prox-grad {admm_err:.1e}, x_k identical every iteration: {identical}, "
           f"consensus vs closed form {cons_err:.1e}")


# 9. Monte Carlo pi -------------------------------------------------------------------


def test_criterion_9_mc_pi():
    tol = 3 * np.sqrt(np.pi * (4 - np.pi) / 20000)
    hits = sum(abs(run0(2, mc_pi, 10000, seed) - np.pi) <= tol for seed in range(100))
    record(9, hits >= 95, f"{hits}/100 seeds within {tol:.4f}")


# 10. protocol fidelity -------------------------------------------------------------


def _protocol_runs(comm, mds_points):
    cfg = SolverConfig(max_iters=200000, eval_every=100, tol=1e-5)
    out = {}
    out["nmf-mult"] = nmf_multiplicative(nmf_problem(comm, 20, 20, 3, seed=0), cfg)[2]
    out["nmf-apg"] = nmf_apg(nmf_problem(comm, 20, 20, 3, seed=0, eps=0.1), cfg)[2]
    pet = pet_toy(4, 16, seed=0)[0]
    out["pet-mm"] = pet_mm_ridge(comm, pet, mu=0.1, config=cfg)[1]
    out["pet-pdhg"] = pet_pdhg_tv(comm, pet, rho=0.01, config=cfg)[1]
    out["pet-spdhg"] = pet_spdhg_tv(comm, pet, 0.2, rho=0.01, config=cfg)[1]
    prob, _ = mds_problem(comm, mds_points, 2, seed=0)
    out["mds"] = mds_fit(prob, initial_embedding(comm, mds_points, 2, seed=100), cfg)[1]
    out["cox"] = cox_l1(cox_data(comm, 50, 20, seed=0, lam=1e-3), config=cfg)[1]
    return out


def test_criterion_10_protocol_fidelity():
    toy = run0(2, _protocol_runs, 30)
    stopped = {k: tr.converged and tr.iters[-1] % 100 == 0 for k, tr in toy.items()}
    one, four = run0(1, _protocol_runs, 32), run0(4, _protocol_runs, 32)
    worst = 0.0
    same_len = True
    for k in one:
        a, b = np.array(one[k].objectives), np.array(four[k].objectives)
        same_len &= a.shape == b.shape
        if a.shape == b.shape:
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))))
    record(10, all(stopped.values()) and same_len and worst <= 1e-10,
           ", ".join(f"{k} {toy[k].iters[-1]}" for k in toy)
           + f"; world 1 vs 4 max rel diff {worst:.1e}")


# 11. backend equivalence -------------------------------------------------------------


def _collectives(comm):
    rng = comm.rng(11)
    local = rng.standard_normal((3, 4))
    parts = [comm.all_reduce(local), comm.broadcast(local if comm.rank == 0 else None),
             comm.all_gather(local), comm.all_reduce_scalar(float(local.sum()))]
    g = comm.gather(local)
    r = comm.reduce(local)
    s = comm.scatter([np.full(2, i, dtype=float) for i in range(comm.world_size)]
                     if comm.rank == 0 else None)
    parts += [g, r, s]
    return [np.asarray(p).tobytes() if not isinstance(p, list)
            else b"".join(np.asarray(q).tobytes() for q in p)
            for p in parts if p is not None]


def test_criterion_11_backend_equivalence(tmp_path, capsys):
    coll = {be: run(4, _collectives, backend=be) for be in ("inproc", "multiproc")}
    bitwise = coll["inproc"] == coll["multiproc"]
    same = {}
    for cmd, extra in (("mm-bench", ["--rows", "16", "--cols", "16"]),
                       ("mcpi", ["--n", "10000", "--seed", "3"])):
        files = []
        for be in ("inproc", "multiproc"):
            path = tmp_path / f"{cmd}-{be}.csv"
            code = main([cmd, "--workers", "4", "--backend", be, "--no-timing",
                         "--out", str(path)] + extra)
            files.append(path.read_bytes() if code == 0 else None)
        same[cmd] = files[0] is not None and files[0] == files[1]
    capsys.readouterr()
    record(11, bitwise and all(same.values()),
           f"collectives bitwise: {bitwise}, identical CSVs: {same}")
