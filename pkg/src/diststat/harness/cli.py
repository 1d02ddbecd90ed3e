"""Command-line entry point: ``diststat <subcommand> [flags]``.

Each subcommand spawns a world of ``--workers`` ranks, runs one experiment
and prints rank 0's result.  Exit codes: 0 success, 2 usage or invalid
input, 3 partition mismatch, 4 numerical failure.
"""

import argparse
import csv
import logging
import math
import sys
import time

import numpy as np

from .. import autodiff
from ..apps import cox, mcpi, mds, nmf, pet
from ..comm import BACKENDS, spawn_world
from ..distmat import ROW, SCENARIOS, create, gather_full, matmul
from ..distmat.io import read_matrix, write_csv, write_dstm
from ..errors import (
    ConfigError,
    ContractError,
    DispatchError,
    IterationError,
    MonotonicityError,
    PartitionError,
    ShapeError,
    WorldError,
)
from ..optim import SolverConfig
from .data import KINDS, gen_data, load_pet

EXIT_OK, EXIT_USAGE, EXIT_PARTITION, EXIT_NUMERIC = 0, 2, 3, 4
_USAGE_ERRORS = ("ConfigError", "ContractError", "ShapeError", "DispatchError", "ValueError",
                 "FormatError", "FileNotFoundError")
_PARTITION_ERRORS = ("PartitionError",)
MM_TOL = 1e-12


class NumericalFailure(Exception):
    pass


def _dtype(args):
    return np.float32 if args.precision == "f32" else np.float64


def _config(args):
    return SolverConfig(max_iters=args.iters, eval_every=args.eval_every, tol=args.tol,
                        seed=args.seed, strict=args.strict, timing=not args.no_timing)


def check_divisible(workers, **dims):
    """Every split dimension must be a multiple of the worker count."""
    for name, n in dims.items():
        if n % workers:
            raise PartitionError(f"{name}={n} is not a multiple of --workers {workers}")


def _require_f64(args):
    if args.precision != "f64":
        raise ConfigError(f"{args.command} supports only --precision f64")


def _finite(value, what="objective"):
    if not math.isfinite(value):
        raise NumericalFailure(f"{what} is not finite: {value}")
    return value


# rank programs ------------------------------------------------------------------


def _mm_bench_rank(comm, scenarios, p, r, q, seed, dtype):
    rows = []
    for sid in scenarios:
        pa, pb, po, _ = SCENARIOS[sid]
        a = create(comm, p, r, pa, "uniform", seed=seed + 2 * sid, dtype=dtype)
        b = create(comm, r, q, pb, "uniform", seed=seed + 2 * sid + 1, dtype=dtype)
        comm.barrier()
        t0 = time.perf_counter()
        c = matmul(a, b, out=po)
        seconds = time.perf_counter() - t0
        if c.partition is not po:
            raise DispatchError(f"scenario {sid} produced a {c.partition.value} result")
        full_c = gather_full(c)
        full_a, full_b = gather_full(a), gather_full(b)
        if comm.rank == 0:
            ref = full_a.astype(np.float64) @ full_b.astype(np.float64)
            err = float(np.max(np.abs(full_c - ref)) / max(np.max(np.abs(ref)), 1e-300))
            checksum = float(np.sum(full_c, dtype=np.float64))
            rows.append((sid, err, checksum, seconds))
    return rows


def _nmf_rank(comm, args):
    dtype = _dtype(args)
    if args.data:
        full = read_matrix(args.data).astype(dtype) if comm.rank == 0 else None
        X = create(comm, args.rows, args.cols, ROW, "from_full", full=full, dtype=dtype)
        V = create(comm, args.rows, args.rank, ROW, "uniform", seed=args.seed + 1, dtype=dtype)
        W = create(comm, args.cols, args.rank, ROW, "uniform", seed=args.seed + 2,
                   dtype=dtype).T
        state = nmf.NmfState(X, V, W, args.eps)
    else:
        state = nmf.nmf_problem(comm, args.rows, args.cols, args.rank, seed=args.seed,
                                eps=args.eps, dtype=dtype)
    if args.algorithm == "multiplicative":
        _, _, trace = nmf.nmf_multiplicative(state, _config(args))
    else:
        _, _, trace = nmf.nmf_apg(state, _config(args), step_rule=args.step_rule)
    return {"trace": trace}


def _pet_problem(args):
    if args.data:
        return load_pet(args.data)
    return pet.pet_toy(args.grid, args.detectors, seed=args.seed)[0]


def _pet_rank(comm, args, problem):
    config = _config(args)
    if args.algorithm == "mm":
        lam, trace = pet.pet_mm_ridge(comm, problem, mu=args.mu, config=config)
    elif args.algorithm == "pdhg":
        lam, trace = pet.pet_pdhg_tv(comm, problem, rho=args.rho, config=config,
                                     sigma=args.sigma, tau=args.tau)
    else:
        lam, trace = pet.pet_spdhg_tv(comm, problem, args.pi, rho=args.rho, config=config,
                                      sigma=args.sigma, tau=args.tau)
    return {"trace": trace, "image": gather_full(lam)}


def _mds_rank(comm, args):
    if args.data:
        full = read_matrix(args.data) if comm.rank == 0 else None
        pts = create(comm, args.points, args.dim, ROW, "from_full", full=full)
        problem = mds.MdsProblem(mds.pairwise_distances(pts), args.embed_dim)
    else:
        problem, _ = mds.mds_problem(comm, args.points, args.dim, args.embed_dim, seed=args.seed)
    theta0 = mds.initial_embedding(comm, args.points, args.embed_dim, seed=args.seed + 100)
    theta, trace = mds.mds_fit(problem, theta0, _config(args))
    return {"trace": trace, "embedding": gather_full(theta)}


def _cox_rank(comm, args):
    data = cox.cox_data(comm, args.rows, args.cols, seed=args.seed, lam=args.lam,
                        unpenalized=args.unpenalized)
    beta, trace = cox.cox_l1(data, step=args.step, config=_config(args))
    return {"trace": trace, "beta": gather_full(beta)}


# subcommands --------------------------------------------------------------------------


def _spawn(args, program, *extra):
    return spawn_world(args.workers, program, *extra, backend=args.backend)[0]


def _report_trace(args, result):
    trace = result["trace"]
    final = _finite(trace.final)
    if args.out:
        trace.to_csv(args.out)
    print(f"final objective: {final!r}")
    print(f"iterations: {trace.iters[-1]}  converged: {'yes' if trace.converged else 'no'}"
          f"  monotonicity violations: {len(trace.violations)}")


def cmd_mcpi(args):
    estimate = _spawn(args, lambda comm: mcpi.mc_pi(comm, args.n, args.seed))
    _finite(estimate, "estimate")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["workers", "n", "seed", "estimate"])
            w.writerow([args.workers, args.n, args.seed, repr(estimate)])
    print(f"pi estimate: {estimate!r}")
    return EXIT_OK


def cmd_mm_bench(args):
    scenarios = sorted(SCENARIOS) if args.scenario == "all" else [int(args.scenario)]
    inner = args.inner or args.cols
    check_divisible(args.workers, rows=args.rows, cols=args.cols, inner=inner)
    rows = _spawn(args, _mm_bench_rank, scenarios, args.rows, inner, args.cols, args.seed,
                  _dtype(args))
    tol = MM_TOL if args.precision == "f64" else 1e-5
    failed = 0
    for sid, err, checksum, seconds in rows:
        pa, pb, po, comm_desc = SCENARIOS[sid]
        ok = err <= tol
        failed += not ok
        print(f"scenario {sid:2d} {pa.value}x{pb.value}->{po.value}: "
              f"{'PASS' if ok else 'FAIL'} max_rel_err={err:.3e} ({comm_desc})")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "max_rel_error", "checksum", "seconds"])
            for sid, err, checksum, seconds in rows:
                w.writerow([sid, repr(err), repr(checksum),
                            repr(0.0 if args.no_timing else seconds)])
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_nmf(args):
    check_divisible(args.workers, rows=args.rows, cols=args.cols)
    _report_trace(args, _spawn(args, _nmf_rank, args))
    return EXIT_OK


def cmd_pet(args):
    _require_f64(args)
    problem = _pet_problem(args)
    check_divisible(args.workers, pixels=problem.shape[1])
    result = _spawn(args, _pet_rank, args, problem)
    _report_trace(args, result)
    if args.image:
        img = result["image"].reshape(-1)
        g = int(round(math.sqrt(img.size)))
        write_dstm(args.image, img.reshape(g, g) if g * g == img.size else img.reshape(-1, 1))
    return EXIT_OK


def cmd_mds(args):
    _require_f64(args)
    check_divisible(args.workers, points=args.points)
    result = _spawn(args, _mds_rank, args)
    _report_trace(args, result)
    if args.embedding:
        write_csv(args.embedding, result["embedding"])
    return EXIT_OK


def cmd_cox(args):
    _require_f64(args)
    check_divisible(args.workers, cols=args.cols)
    result = _spawn(args, _cox_rank, args)
    _report_trace(args, result)
    if args.beta:
        write_csv(args.beta, result["beta"])
    return EXIT_OK


def cmd_gen_data(args):
    if not args.out:
        raise ConfigError("gen-data needs --out")
    if args.kind == "pet_toy":
        dims = (args.grid, args.detectors)
    else:
        dims = (args.rows, args.cols)
    for fn in gen_data(args.kind, dims, args.seed, args.out):
        print(fn)
    return EXIT_OK


def cmd_adcheck(args):
    g = autodiff.example_graph()
    x = [3.0, 2.0]
    rev = autodiff.reverse_mode(g, x)
    fwd = [autodiff.forward_mode(g, x, i) for i in range(2)]
    print(f"example at (3, 2): reverse={tuple(float(v) for v in rev)} "
          f"forward={tuple(float(v) for v in fwd)}")
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    passed = 0
    for _ in range(args.graphs):
        graph = autodiff.random_graph(rng, n_inputs=2, n_ops=6)
        pt = rng.uniform(0.5, 1.5, 2)
        grad = autodiff.reverse_mode(graph, pt)
        fd = autodiff.finite_difference(graph, pt)
        rel = float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0)))
        worst = max(worst, rel)
        passed += rel <= 1e-6
    print(f"random graphs: {passed}/{args.graphs} match finite differences "
          f"(worst relative error {worst:.2e})")
    return EXIT_OK if passed == args.graphs else EXIT_NUMERIC


# parser ------------------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _probability(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"expected a probability in (0, 1], got {text}")
    return v


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--workers", type=_positive_int, default=1)
    shared.add_argument("--backend", choices=BACKENDS, default="inproc")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--precision", choices=("f64", "f32"), default="f64")
    shared.add_argument("--iters", type=_positive_int, default=1000)
    shared.add_argument("--tol", type=float, default=1e-5)
    shared.add_argument("--eval-every", type=_positive_int, default=100)
    shared.add_argument("--out", help="trace / result CSV (gen-data: output path)")
    shared.add_argument("--no-timing", action="store_true",
                        help="write 0 in the seconds column so traces are reproducible")
    shared.add_argument("--strict", action="store_true",
                        help="fail on any monotonicity violation of an MM trace")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="diststat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mcpi", parents=[shared], help="Monte Carlo estimate of pi")
    p.add_argument("--n", type=_positive_int, default=10000, help="points per worker")
    p.set_defaults(func=cmd_mcpi)

    p = sub.add_parser("mm-bench", parents=[shared], help="check the multiplication scenarios")
    p.add_argument("--scenario", default="all", choices=["all"] + [str(s) for s in SCENARIOS])
    p.add_argument("--rows", type=_positive_int, default=64)
    p.add_argument("--cols", type=_positive_int, default=64)
    p.add_argument("--inner", type=_positive_int, default=None,
                   help="inner dimension (default: --cols)")
    p.set_defaults(func=cmd_mm_bench)

    p = sub.add_parser("nmf", parents=[shared], help="nonnegative matrix factorization")
    p.add_argument("--rows", type=_positive_int, default=20)
    p.add_argument("--cols", type=_positive_int, default=20)
    p.add_argument("--rank", type=_positive_int, default=3)
    p.add_argument("--algorithm", choices=("multiplicative", "apg"), default="multiplicative")
    p.add_argument("--eps", type=float, default=0.0, help="ridge parameter (apg)")
    p.add_argument("--step-rule", choices=("frobenius", "squared"), default="frobenius")
    p.add_argument("--data", help="DSTM or CSV file holding X")
    p.set_defaults(func=cmd_nmf)

    p = sub.add_parser("pet", parents=[shared], help="emission tomography reconstruction")
    p.add_argument("--grid", type=_positive_int, default=4)
    p.add_argument("--detectors", type=_positive_int, default=16)
    p.add_argument("--algorithm", choices=("mm", "pdhg", "spdhg"), default="mm")
    p.add_argument("--mu", type=float, default=0.0, help="ridge penalty (mm)")
    p.add_argument("--rho", type=float, default=0.0, help="TV penalty (pdhg, spdhg)")
    p.add_argument("--pi", type=_probability, default=0.2, help="sampling probability (spdhg)")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--data", help="directory written by gen-data --kind pet_toy")
    p.add_argument("--image", help="write the reconstructed image (DSTM, row-major)")
    p.set_defaults(func=cmd_pet)

    p = sub.add_parser("mds", parents=[shared], help="multidimensional scaling")
    p.add_argument("--points", type=_positive_int, default=30)
    p.add_argument("--dim", type=_positive_int, default=2, help="dimension of source points")
    p.add_argument("--embed-dim", type=_positive_int, default=2)
    p.add_argument("--data", help="DSTM or CSV file of source points")
    p.add_argument("--embedding", help="write the fitted coordinates (CSV)")
    p.set_defaults(func=cmd_mds)

    p = sub.add_parser("cox", parents=[shared], help="l1-penalized Cox regression")
    p.add_argument("--rows", type=_positive_int, default=50)
    p.add_argument("--cols", type=_positive_int, default=20)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p.add_argument("--step", type=float, default=None, help="default 1 / (2 ||X||_2^2)")
    p.add_argument("--unpenalized", type=int, nargs="*", default=[])
    p.add_argument("--beta", help="write the fitted coefficients (CSV)")
    p.set_defaults(func=cmd_cox)

    p = sub.add_parser("gen-data", parents=[shared], help="write synthetic data files")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--rows", type=_positive_int, default=100)
    p.add_argument("--cols", type=_positive_int, default=10)
    p.add_argument("--grid", type=_positive_int, default=4)
    p.add_argument("--detectors", type=_positive_int, default=16)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("adcheck", parents=[shared], help="automatic differentiation checks")
    p.add_argument("--graphs", type=_positive_int, default=50)
    p.set_defaults(func=cmd_adcheck)
    return parser


def _exit_code_for(name):
    if name in _PARTITION_ERRORS:
        return EXIT_PARTITION
    if name in _USAGE_ERRORS:
        return EXIT_USAGE
    return EXIT_NUMERIC


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PartitionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTITION
    except (ConfigError, ContractError, ShapeError, DispatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, IterationError, MonotonicityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WorldError as exc:
        code = _exit_code_for(exc.error_type)
        label = "numerical failure" if code == EXIT_NUMERIC else "error"
        print(f"{label}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
