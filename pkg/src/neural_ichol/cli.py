"""Command line entry point: ``bench``, ``train``, ``solve`` and ``ichol``.

Numerical failures (breakdown, non-convergence) are reported as data and
exit 0; only I/O and configuration errors exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .bench import (
    DEFAULT_SHIFT,
    DEFAULT_TOLS,
    METHODS,
    MethodSpec,
    emit_report,
    emit_summary,
    expand_specs,
    load_matrix,
    run_method,
    run_suite,
)
from .factor import BreakdownError, ichol0
from .krylov import SolveConfig, make_rhs, random_rhs
from .mmio import MatrixMarketError, write_factor
from .neural import TrainConfig, train
from .sparse import (
    SparseError,
    diagonal_shift,
    jacobi_scale,
    rcm_order,
    symmetric_permute,
)

log = logging.getLogger("neural_ichol")


class ConfigError(Exception):
    pass


def _methods(text: str) -> list[str]:
    names = [t.strip().lower() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {','.join(METHODS)}")
    return names


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=_positive_int, help="number of training vectors (default ceil(sqrt(N)))")
    p.add_argument("--epochs", type=_positive_int, default=1)
    p.add_argument("--alpha", type=float, help="learning rate (default depends on normalization)")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--initial-accumulator", type=float, default=TrainConfig.initial_accumulator)
    p.add_argument("--optimizer", choices=("adagrad", "sgd"), default="adagrad")
    p.add_argument("--seed", type=int, default=0)


def _train_config(args, normalize: bool = False) -> TrainConfig:
    return TrainConfig(
        alpha=args.alpha,
        epsilon=args.epsilon,
        epochs=args.epochs,
        optimizer=args.optimizer,
        normalize_samples=normalize,
        seed=args.seed,
        samples=args.samples,
        initial_accumulator=args.initial_accumulator,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neural-ichol", description="Incomplete-Cholesky and trained-factor preconditioners for CG."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the method matrix over a set of matrices")
    b.add_argument("--matrix", action="append", required=True, help="path.mtx or laplacian:WxH[xD]; repeatable")
    b.add_argument("--methods", type=_methods, default=list(METHODS))
    b.add_argument("--tol", type=float, action="append", help="relative tolerance; repeatable (default 1e-5 and 1e-7)")
    b.add_argument("--ordering", choices=("natural", "rcm", "both"), default="natural")
    b.add_argument("--shift", type=float, default=DEFAULT_SHIFT)
    b.add_argument("--max-iters", type=_positive_int, default=10_000)
    b.add_argument("--rhs", choices=("ones", "random"), default="ones", help="b = A*ones or seeded Gaussian")
    b.add_argument("--sequential-timing", action="store_true", help="run cells one at a time for clean timings")
    b.add_argument("--jobs", type=_positive_int, default=1)
    b.add_argument("--out", default="report.csv")
    b.add_argument("--summary", help="also write per-method averages to this CSV")
    _add_train_flags(b)

    t = sub.add_parser("train", help="train a factor and write it with its loss history")
    t.add_argument("--matrix", required=True)
    t.add_argument("--normalize", action="store_true", help="unit-norm training samples")
    t.add_argument("--ordering", choices=("natural", "rcm"), default="natural")
    t.add_argument("--out", default="factor.mtx")
    t.add_argument("--loss-csv", default="loss.csv")
    _add_train_flags(t)

    s = sub.add_parser("solve", help="solve one system and print the solve report")
    s.add_argument("--matrix", required=True)
    s.add_argument("--method", choices=METHODS, default="pcg")
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--max-iters", type=_positive_int, default=10_000)
    s.add_argument("--ordering", choices=("natural", "rcm"), default="natural")
    s.add_argument("--shift", type=float, default=DEFAULT_SHIFT)
    s.add_argument("--rhs", choices=("ones", "random"), default="ones")
    s.add_argument("--history-csv", help="write (iteration, relres) to this file")
    _add_train_flags(s)

    f = sub.add_parser("ichol", help="ICHOL(0) factor a matrix, or report where it breaks down")
    f.add_argument("--matrix", required=True)
    f.add_argument("--scale", action="store_true", help="Jacobi-scale before factoring")
    f.add_argument("--shift", type=float, default=0.0, help="diagonal shift applied before factoring")
    f.add_argument("--ordering", choices=("natural", "rcm"), default="natural")
    f.add_argument("--out", help="write the factor here (Matrix Market)")
    return parser


def _load(source: str):
    try:
        return load_matrix(source)
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read {source}: {exc}") from exc
    except (MatrixMarketError, SparseError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _reorder(a, ordering: str):
    return symmetric_permute(a, rcm_order(a)) if ordering == "rcm" else a


def cmd_bench(args) -> int:
    matrices = [_load(m) for m in args.matrix]
    tols = tuple(args.tol) if args.tol else DEFAULT_TOLS
    orderings = ("natural", "rcm") if args.ordering == "both" else (args.ordering,)
    specs = expand_specs(args.methods, tols, orderings, args.shift, _train_config(args))
    result = run_suite(
        matrices,
        specs,
        SolveConfig(max_iters=args.max_iters),
        sequential_timing=args.sequential_timing,
        jobs=args.jobs,
        rhs_seed=args.seed if args.rhs == "random" else None,
    )
    emit_report(result.rows, args.out)
    if args.summary:
        emit_summary(result.averages, args.summary)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    print("nfacts denominator: single-threaded ICHOL(0) wall time of this package")
    print(f"{'method':<10} {'ordering':<8} {'mean_iters':>10} {'converged':>9} {'failed':>6}")
    for m in result.averages:
        mean = "-" if m.mean_iterations is None else f"{m.mean_iterations:.1f}"
        print(f"{m.label:<10} {m.ordering:<8} {mean:>10} {m.converged:>9} {m.not_converged:>6}")
    for row in result.rows:
        if row.note:
            log.info("%s %s %s: %s", row.matrix, row.label, row.ordering, row.note)
    return 0


def cmd_train(args) -> int:
    name, a = _load(args.matrix)
    a = _reorder(a, args.ordering)
    factor, state = train(a, _train_config(args, args.normalize))
    write_factor(factor, args.out, comment=f"trained factor for {name} ({args.ordering} ordering)")
    with open(args.loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss"])
        for k, value in enumerate(state.loss_history):
            writer.writerow([k, repr(value)])
    print(f"steps={state.steps} initial_loss={state.initial_sample_loss:.6g} final_loss={state.final_sample_loss:.6g}")
    print(f"wrote {args.out} and {args.loss_csv}")
    return 0


def cmd_solve(args) -> int:
    name, a = _load(args.matrix)
    rhs = random_rhs(a, args.seed) if args.rhs == "random" else make_rhs(a)
    tc = _train_config(args) if args.method in ("nn", "nnn") else None
    spec = MethodSpec(args.method, args.tol, args.ordering, args.shift, tc)
    cfg = SolveConfig(args.tol, args.max_iters, record_history=args.history_csv is not None)
    row = run_method(a, spec, cfg, name, rhs)
    report = row.report
    print(f"matrix={name} n={a.n} nnz={a.nnz} method={spec.label} ordering={args.ordering}")
    print(f"setup={row.setup}" + (f" ({row.note})" if row.setup != "ok" and row.note else ""))
    if report is None:
        print(f"iterations={row.iterations} converged=false")
        return 0
    reason = report.breakdown_reason.value if report.breakdown_reason else "none"
    print(
        f"iterations={report.iterations} converged={str(report.converged).lower()} "
        f"final_relres={report.final_relres:.6e} breakdown_reason={reason}"
    )
    if args.rhs == "ones" and row.solution is not None:
        print(f"forward_error_inf={np.max(np.abs(row.solution - 1.0)):.6e}")
    if args.history_csv:
        with open(args.history_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "relres"])
            for k, value in enumerate(report.residual_history):
                writer.writerow([k, repr(value)])
    return 0


def cmd_ichol(args) -> int:
    name, a = _load(args.matrix)
    a = _reorder(a, args.ordering)
    if args.scale:
        a = jacobi_scale(a)[0]
    if args.shift:
        a = diagonal_shift(a, args.shift)
    try:
        factor = ichol0(a)
    except BreakdownError as exc:
        print(f"matrix={name} setup=factor_breakdown row={exc.row} pivot={exc.pivot!r}")
        return 0
    print(f"matrix={name} setup=ok n={factor.n} nnz={factor.nnz} min_diag={factor.diagonal().min():.6e}")
    if args.out:
        write_factor(factor, args.out, comment=f"ICHOL(0) factor of {name}")
        print(f"wrote {args.out}")
    return 0


COMMANDS = {"bench": cmd_bench, "train": cmd_train, "solve": cmd_solve, "ichol": cmd_ichol}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
