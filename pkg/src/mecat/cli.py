"""Command-line surface: every capability as a reproducible batch run.

Subcommands write data to files and diagnostics to stderr.  Exit codes:
0 success, 1 usage or I/O problems, 2 numeric failures (quadrature,
convergence, overflow guards), 3 violated model invariants.  A JSON file
passed with ``--config`` supplies defaults under the flag names; explicit
flags still win.  MECAT_SEED in the environment seeds everything that is
random unless ``--seed`` says otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import exactexp, generators, magnus, pseudospectra, stochastic
from .errors import InvariantViolation, NumericError

__all__ = ["main", "build_parser"]


def _default_seed() -> int:
    try:
        return int(os.environ.get("MECAT_SEED", "0"))
    except ValueError:
        return 0


def _default_threads() -> int:
    return os.cpu_count() or 1


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _build_matrix(args):
    if args.which == "a0":
        return generators.build_a0(args.n)
    if args.which == "a1":
        return generators.build_a1(args.n)
    if args.which == "tasep":
        return generators.build_tasep_generator(args.k, args.d)
    if args.which == "combined":
        f = generators.parse_rate(args.f)
        return generators.assemble(f, args.n, args.t)
    raise ValueError(f"--which got unsupported value {args.which!r}")


# ---------------------------------------------------------------------------
# subcommand bodies


def run_matrix(args) -> int:
    op = _build_matrix(args)
    generators.write_coordinates(args.out, op)
    _say(f"wrote {args.out} (dim {op.dim}, label {op.label})")
    if args.which == "tasep":
        states_out = args.states_out or args.out + ".states.csv"
        generators.write_tasep_states(states_out, op)
        _say(f"wrote {states_out} ({op.dim} states)")
    return 0


def run_sigma(args) -> int:
    f = generators.parse_rate(args.f)
    if args.t_max <= 0:
        raise ValueError(f"--t-max must be positive, got {args.t_max}")
    if args.steps < 1:
        raise ValueError(f"--steps must be >= 1, got {args.steps}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    known = {"full", "order1", "order2", "reference"}
    unknown = set(methods) - known
    if unknown:
        raise ValueError(f"--methods got unknown entries {sorted(unknown)}")
    ts = np.linspace(0.0, args.t_max, args.steps + 1)[1:]
    rows = []
    for t in ts:
        t = float(t)
        for m in methods:
            if m == "full":
                rows.append(magnus.sigma(f, t))
            elif m == "order1":
                rows.append(magnus.sigma_truncated(f, t, order=1))
            elif m == "order2":
                rows.append(magnus.sigma_truncated(f, t, order=2))
            else:
                rows.append(magnus.sigma_reference(f, t))
    magnus.write_sigma_table(args.out, rows)
    _say(f"wrote {args.out} ({len(rows)} rows, methods {','.join(methods)})")
    return 0


def run_solve(args) -> int:
    f = generators.parse_rate(args.f)
    i0 = args.n if args.i0 is None else args.i0
    if not 0 <= i0 <= args.n:
        raise ValueError(f"--i0 must lie in 0..{args.n}, got {i0}")
    p0 = np.zeros(args.n + 1)
    p0[i0] = 1.0
    method = {"split": "magnus_split", "ode": "ode",
              "spectral": "spectral_const"}[args.method]
    t0 = time.time()
    p = exactexp.propagate(f, p0, args.t, method=method)
    el = time.time() - t0
    with open(args.out, "w") as fh:
        fh.write("state,probability\n")
        for i, v in enumerate(p):
            fh.write(f"{i},{float(v)!r}\n")
    _say(f"wrote {args.out} (n={args.n}, t={args.t}, method {args.method}, "
         f"{el:.2f}s, sum-1={p.sum() - 1.0:.2e}, min={p.min():.2e})")
    return 0


def run_pseudospectrum(args) -> int:
    method = {"svd": "svd_direct", "invit": "inverse_iteration"}[args.method]
    if args.preset:
        ps = pseudospectra.preset(args.preset)
        matrix, re_range, im_range = ps.matrix, ps.re_range, ps.im_range
        label, default_levels = ps.matrix_label, ps.levels
    else:
        if args.which is None:
            raise ValueError("either --preset or --which is required")
        for name, val in (("--re-min", args.re_min), ("--re-max", args.re_max),
                          ("--im-min", args.im_min), ("--im-max", args.im_max)):
            if val is None:
                raise ValueError(f"{name} is required when --preset is not used")
        op = _build_matrix(args)
        matrix = (op.to_dense() if isinstance(op, generators.SparseGenerator)
                  else op.to_dense(float))
        re_range, im_range = (args.re_min, args.re_max), (args.im_min, args.im_max)
        label, default_levels = op.label, (1e0, 1e-2, 1e-4)
    t0 = time.time()
    g = pseudospectra.grid(matrix, re_range, im_range, args.nre, args.nim,
                           method=method, use_schur=args.schur,
                           threads=args.threads, matrix_label=label)
    el = time.time() - t0
    pseudospectra.write_grid_csv(args.out, g)
    _say(f"wrote {args.out} ({args.nre}x{args.nim}, {label}, {method}"
         f"{'+schur' if args.schur else ''}, {el:.1f}s)")
    if args.contours:
        levels = default_levels if args.levels is None else tuple(
            float(x) for x in args.levels.split(","))
        cs = pseudospectra.contour_levels(g, levels)
        pseudospectra.write_contours_csv(args.contours, cs)
        _say(f"wrote {args.contours} ({len(cs)} polylines at {len(levels)} levels)")
    return 0


def run_eigcheck(args) -> int:
    if args.matrix == "a0":
        op = generators.build_a0(args.n)
        exact = [-2.0 * r for r in range(args.n + 1)]
        pairs = [(-2.0 * r, np.array(exactexp.eigenvector_a0(args.n, r), dtype=float))
                 for r in range(args.n + 1)]
    elif args.matrix == "a1":
        op = generators.build_a1(args.n)
        exact = [0.0] * (args.n + 1)
        kernel = np.zeros(args.n + 1, dtype=object)
        kernel[0] = 1
        kernel = exactexp.fast_z_apply(kernel).astype(float)
        pairs = [(0.0, kernel)]
    else:
        raise ValueError(f"--matrix got unsupported value {args.matrix!r}")
    report = pseudospectra.eig_sensitivity_report(op.to_dense(float), exact, pairs)
    pseudospectra.write_report_json(args.out, report)
    _say(f"wrote {args.out} (max_abs_error {report.max_abs_error:.3e}, "
         f"max_imag {report.max_imag:.3e}, residual {report.residual_of_exact:.3e})")
    return 0


def run_ssa(args) -> int:
    f = generators.parse_rate(args.f)
    i0 = args.n if args.i0 is None else args.i0
    if args.trajectory:
        traj = stochastic.ssa_path(f, args.n, i0, args.t, args.seed)
        stochastic.write_trajectory_csv(args.trajectory, traj)
        _say(f"wrote {args.trajectory} ({len(traj.times) - 1} jumps)")
    t0 = time.time()
    marg = stochastic.empirical_marginal(f, args.n, i0, args.t, args.paths,
                                         args.seed, threads=args.threads)
    el = time.time() - t0
    stochastic.write_histogram_csv(args.out, marg)
    theta = stochastic.rre_theta(f, i0 / args.n, args.t)
    _say(f"wrote {args.out} ({args.paths} paths in {el:.1f}s; mean occupancy "
         f"{marg.mean_occupancy():.4f}, rate-equation mean {theta:.4f})")
    return 0


def bench_transforms(op: str, n: int, reps: int, seed: int) -> dict:
    """Time the in-place binomial transforms against dense big-integer
    products, checking bit-equality first."""
    if op not in ("z", "ztilde"):
        raise ValueError(f"unknown bench op {op!r}")
    if n < 1 or reps < 1:
        raise ValueError("bench needs n >= 1 and reps >= 1")
    rng = np.random.default_rng(seed)
    vec = np.array([int(x) for x in rng.integers(-9, 10, size=n + 1)], dtype=object)
    z, zt = exactexp.pascal_matrices(n)
    dense_mat = zt if op == "ztilde" else z
    fast = exactexp.fast_ztilde_apply if op == "ztilde" else exactexp.fast_z_apply

    fast_out = fast(vec)
    dense_out = np.dot(dense_mat, vec)
    equal = all(int(a) == int(b) for a, b in zip(fast_out, dense_out))
    if not equal:
        raise ArithmeticError(f"fast {op} transform disagrees with dense product")

    t0 = time.perf_counter()
    for _ in range(reps):
        fast(vec)
    fast_s = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    for _ in range(reps):
        np.dot(dense_mat, vec)
    dense_s = (time.perf_counter() - t0) / reps
    return {
        "op": op, "n": n, "reps": reps, "equal": True,
        "fast_seconds": fast_s, "dense_matvec_seconds": dense_s,
        "speedup_vs_dense": dense_s / fast_s if fast_s > 0 else float("inf"),
    }


def run_bench(args) -> int:
    doc = bench_transforms(args.op, args.n, args.reps, args.seed)
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    _say(f"wrote {args.out} (fast {doc['fast_seconds']:.4f}s vs dense "
         f"{doc['dense_matvec_seconds']:.4f}s, equal {doc['equal']})")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="mecat",
        description="master-equation computation toolkit for the driven "
                    "two-state isomerisation model",
        allow_abbrev=False,
    )
    subs = parser.add_subparsers(dest="command", required=True)
    table = {}

    def sub(name, func, help_text, required=("out",)):
        # required flags stay optional at parse time so --config can supply
        # them; _apply_config enforces presence after the merge
        p = subs.add_parser(name, help=help_text, allow_abbrev=False)
        p.set_defaults(func=func, _required=tuple(required))
        p.add_argument("--config", help="JSON file with default flag values")
        table[name] = p
        return p

    p = sub("matrix", run_matrix, "emit a generator in coordinate format",
            required=("which", "out"))
    p.add_argument("--which", choices=["a0", "a1", "tasep", "combined"])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--k", type=int, default=3, help="tasep particle count")
    p.add_argument("--d", type=int, default=12, help="tasep displacement cap")
    p.add_argument("--f", default="sin", help="rate spec for --which combined")
    p.add_argument("--t", type=float, default=1.0, help="time for --which combined")
    p.add_argument("--states-out", help="state table path for --which tasep")
    p.add_argument("--out")

    p = sub("sigma", run_sigma, "tabulate the Magnus drive coefficient",
            required=("f", "t_max", "out"))
    p.add_argument("--f", help="rate spec: sin, cos, const:c, poly:...")
    p.add_argument("--t-max", type=float)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--methods", default="full,order1,order2,reference")
    p.add_argument("--out")

    p = sub("solve", run_solve, "propagate the master equation",
            required=("n", "f", "t", "out"))
    p.add_argument("--n", type=int)
    p.add_argument("--f")
    p.add_argument("--t", type=float)
    p.add_argument("--method", choices=["split", "ode", "spectral"], default="split")
    p.add_argument("--i0", type=int, default=None,
                   help="initial state (default n: everything in species one)")
    p.add_argument("--out")

    p = sub("pseudospectrum", run_pseudospectrum, "sample log10 smin over a box")
    p.add_argument("--preset", choices=list(pseudospectra.PRESET_NAMES))
    p.add_argument("--which", choices=["a0", "a1", "tasep", "combined"])
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--d", type=int, default=12)
    p.add_argument("--f", default="sin")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--re-min", type=float)
    p.add_argument("--re-max", type=float)
    p.add_argument("--im-min", type=float)
    p.add_argument("--im-max", type=float)
    p.add_argument("--nre", type=int, default=200)
    p.add_argument("--nim", type=int, default=200)
    p.add_argument("--method", choices=["svd", "invit"], default="svd")
    p.add_argument("--schur", action="store_true",
                   help="triangularize once, then per-node triangular solves")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--contours", help="also write contour polylines here")
    p.add_argument("--levels", help="comma-separated eps levels, descending")
    p.add_argument("--out")

    p = sub("eigcheck", run_eigcheck, "floating eigensolver vs exact spectrum",
            required=("matrix", "out"))
    p.add_argument("--matrix", choices=["a0", "a1"])
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--out")

    p = sub("ssa", run_ssa, "stochastic paths and their final-state histogram",
            required=("n", "f", "t", "out"))
    p.add_argument("--n", type=int)
    p.add_argument("--f")
    p.add_argument("--t", type=float)
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--i0", type=int, default=None)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--trajectory", help="also write one full path here")
    p.add_argument("--out")

    p = sub("bench", run_bench, "fast binomial transforms vs dense products")
    p.add_argument("--op", choices=["z", "ztilde"], default="ztilde")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out")

    return parser, table


def _apply_config(parser, table, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        sub = table[args.command]
        valid = {a.dest for a in sub._actions}
        unknown = set(cfg) - valid
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)  # explicit flags still override
    missing = [d for d in args._required if getattr(args, d, None) is None]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise ValueError(f"{args.command}: required (by flag or config): {flags}")
    return args


def main(argv=None) -> int:
    parser, table = build_parser()
    try:
        args = _apply_config(parser, table, argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return 0 if exc.code in (0, None) else 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _say(f"error: {exc}")
        return 1
    try:
        return args.func(args)
    except NumericError as exc:
        _say(f"numeric failure: {exc}")
        return 2
    except InvariantViolation as exc:
        _say(f"invariant violated: {exc}")
        return 3
    except (ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
