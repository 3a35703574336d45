"""Experiment harness: the six preconditioning methods, suites and CSV reports.

Methods
-------
``cg``    no preconditioner
``pcg``   ICHOL(0) of A
``scg``   ICHOL(0) of the Jacobi-scaled matrix
``shcg``  ICHOL(0) of the scaled matrix after a diagonal shift (default 0.2);
          the solve still uses the unshifted system
``nn``    trained factor, raw Gaussian samples
``nnn``   trained factor, unit-norm samples

A factorization breakdown is data: the row is kept with ``setup`` set to
``factor_breakdown`` and the iteration count replaced by ``-100``.
"""

from __future__ import annotations

import csv
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .factor import BreakdownError, ichol0
from .krylov import Preconditioner, SolveConfig, SolveReport, cg_solve, make_rhs
from .mmio import parse_matrix_market
from .neural import TrainConfig, TrainingError, TrainState, generate_samples, train
from .sparse import (
    CsrMatrix,
    NotPositiveDiagonalError,
    check_sdd,
    diagonal_shift,
    jacobi_scale,
    rcm_order,
    symmetric_permute,
)

METHODS = ("cg", "pcg", "scg", "shcg", "nn", "nnn")
ORDERINGS = ("natural", "rcm")
SETUPS = ("ok", "factor_breakdown", "not_applicable")
FAILED_ITERATIONS = -100
DEFAULT_SHIFT = 0.2
DEFAULT_TOLS = (1e-5, 1e-7)


@dataclass(frozen=True)
class MethodSpec:
    name: str
    tol: float = 1e-5
    ordering: str = "natural"
    shift: float = DEFAULT_SHIFT
    train: TrainConfig | None = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; expected one of {METHODS}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")
        if self.name in ("nn", "nnn"):
            cfg = self.train if self.train is not None else TrainConfig()
            object.__setattr__(
                self, "train", replace(cfg, normalize_samples=self.name == "nnn")
            )
        elif self.train is not None:
            raise ValueError(f"method {self.name!r} takes no training config")

    @property
    def label(self) -> str:
        """E.g. ``ShCG-5`` for shcg at 1e-5."""
        base = {"cg": "CG", "pcg": "PCG", "scg": "SCG", "shcg": "ShCG", "nn": "NN", "nnn": "NNN"}
        exponent = -math.log10(self.tol)
        tag = str(round(exponent)) if abs(exponent - round(exponent)) < 1e-9 else f"{self.tol:g}"
        return f"{base[self.name]}-{tag}"


def nfacts(time_train: float, time_ichol: float) -> float:
    """Training time expressed as a number of incomplete factorizations."""
    if not time_ichol > 0:
        raise ValueError(f"time_ichol must be > 0, got {time_ichol}")
    if not time_train > 0:
        raise ValueError(f"time_train must be > 0, got {time_train}")
    return time_train / time_ichol


@dataclass(frozen=True)
class CostReport:
    time_train: float
    time_ichol: float

    @property
    def nfacts(self) -> float:
        return nfacts(self.time_train, self.time_ichol)


@dataclass
class BenchRow:
    matrix: str
    n: int
    nnz: int
    sdd: bool
    method: str
    tol: float
    ordering: str
    iterations: int
    converged: bool
    setup: str
    nfacts: float | None = None
    time_train_s: float | None = None
    time_ichol_s: float | None = None
    # in-memory only
    solution: np.ndarray | None = field(default=None, repr=False, compare=False)
    report: SolveReport | None = field(default=None, repr=False, compare=False)
    note: str = field(default="", repr=False, compare=False)

    @property
    def label(self) -> str:
        return MethodSpec(self.method, self.tol).label


CSV_FIELDS = tuple(f.name for f in fields(BenchRow) if f.compare)


@dataclass
class Setup:
    """Everything built before the solve, kept for inspection."""

    preconditioner: Preconditioner
    factored: CsrMatrix | None = None
    time_ichol: float | None = None
    time_train: float | None = None
    train_state: TrainState | None = None


def _timed(fn, repeats: int = 1):
    best, out = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def _ichol_reference_time(a: CsrMatrix, shift: float, repeats: int) -> float:
    """Time of the first ICHOL(0) variant that factors: plain, scaled, scaled+shifted.

    Falls back to the time of the failed plain attempt if none succeeds.
    """
    candidates = [lambda: a]
    try:
        scaled = jacobi_scale(a)[0]
        candidates += [lambda: scaled, lambda: diagonal_shift(scaled, shift)]
    except NotPositiveDiagonalError:
        pass
    failed = None
    for make in candidates:
        m = make()
        t0 = time.perf_counter()
        try:
            _, elapsed = _timed(lambda: ichol0(m), repeats)
            return elapsed
        except BreakdownError:
            if failed is None:
                failed = time.perf_counter() - t0
    return failed


def prepare(a: CsrMatrix, spec: MethodSpec, timing_repeats: int = 1) -> Setup:
    """Build the preconditioner for ``spec`` on ``a`` (already reordered).

    ICHOL(0) timings take the best of ``timing_repeats`` runs; training runs
    once. Raises :class:`BreakdownError` when the ICHOL(0) step fails.
    """
    if spec.name == "cg":
        return Setup(Preconditioner.none())
    if spec.name == "pcg":
        factor, t = _timed(lambda: ichol0(a), timing_repeats)
        return Setup(Preconditioner.llt(factor), a, time_ichol=t)
    if spec.name in ("scg", "shcg"):
        scaled, scaling = jacobi_scale(a)
        target = diagonal_shift(scaled, spec.shift) if spec.name == "shcg" else scaled
        factor, t = _timed(lambda: ichol0(target), timing_repeats)
        return Setup(Preconditioner.scaled_llt(factor, scaling), target, time_ichol=t)

    cfg = spec.train

    def build():
        samples = generate_samples(a, cfg.samples, cfg.normalize_samples, cfg.seed)
        return train(a, cfg, samples, evaluate=False)

    (factor, state), t_train = _timed(build)
    t_ichol = _ichol_reference_time(a, spec.shift, timing_repeats)
    return Setup(Preconditioner.llt(factor), None, t_ichol, t_train, state)


def run_method(
    a: CsrMatrix,
    spec: MethodSpec,
    cfg: SolveConfig = SolveConfig(),
    name: str = "matrix",
    rhs: np.ndarray | None = None,
    sequential_timing: bool = False,
    sdd: bool | None = None,
) -> BenchRow:
    """Run one method on one system; ``cfg.tol`` is overridden by ``spec.tol``.

    ``rhs`` defaults to ``A @ ones``. The returned row carries the solution in
    the original ordering.
    """
    _kernels.warm_up()
    b = make_rhs(a) if rhs is None else np.asarray(rhs, dtype=np.float64)
    cfg = replace(cfg, tol=spec.tol)
    row = BenchRow(
        matrix=name,
        n=a.n,
        nnz=a.nnz,
        sdd=check_sdd(a) if sdd is None else sdd,
        method=spec.name,
        tol=spec.tol,
        ordering=spec.ordering,
        iterations=FAILED_ITERATIONS,
        converged=False,
        setup="not_applicable" if spec.name == "cg" else "ok",
    )

    perm = None
    work, b_work = a, b
    if spec.ordering == "rcm":
        perm = rcm_order(a)
        work, b_work = symmetric_permute(a, perm), perm.apply(b)

    try:
        setup = prepare(work, spec, timing_repeats=3 if sequential_timing else 1)
    except BreakdownError as exc:
        row.setup = "factor_breakdown"
        row.note = str(exc)
        return row
    except (NotPositiveDiagonalError, TrainingError) as exc:
        row.setup = "not_applicable"
        row.note = str(exc)
        return row

    row.time_ichol_s = setup.time_ichol
    row.time_train_s = setup.time_train
    if setup.time_train is not None and setup.time_ichol is not None:
        row.nfacts = nfacts(setup.time_train, setup.time_ichol)

    x, report = cg_solve(work, b_work, setup.preconditioner, cfg)
    row.iterations = report.iterations
    row.converged = report.converged
    row.report = report
    row.solution = perm.unapply(x) if perm is not None else x
    if report.breakdown_reason is not None:
        row.note = report.breakdown_reason.value
    return row


def _row_key(row: BenchRow):
    return (row.matrix, METHODS.index(row.method), -row.tol, ORDERINGS.index(row.ordering))


@dataclass
class MethodAverage:
    method: str
    tol: float
    ordering: str
    mean_iterations: float | None
    converged: int
    not_converged: int

    @property
    def label(self) -> str:
        return MethodSpec(self.method, self.tol).label


@dataclass
class SuiteResult:
    rows: list[BenchRow]
    averages: list[MethodAverage]


def method_averages(rows: list[BenchRow]) -> list[MethodAverage]:
    """Mean iterations per (method, tol, ordering) over converged rows only."""
    groups: dict[tuple, list[BenchRow]] = {}
    for row in rows:
        groups.setdefault((row.method, row.tol, row.ordering), []).append(row)
    out = []
    for (method, tol, ordering), group in groups.items():
        ok = [r.iterations for r in group if r.converged]
        out.append(
            MethodAverage(
                method,
                tol,
                ordering,
                float(np.mean(ok)) if ok else None,
                len(ok),
                len(group) - len(ok),
            )
        )
    out.sort(key=lambda m: (METHODS.index(m.method), -m.tol, ORDERINGS.index(m.ordering)))
    return out


def run_suite(
    matrices: list[tuple[str, CsrMatrix]],
    specs: list[MethodSpec],
    cfg: SolveConfig = SolveConfig(),
    sequential_timing: bool = False,
    jobs: int = 1,
    rhs_seed: int | None = None,
) -> SuiteResult:
    """Run every spec on every matrix.

    Cells run concurrently when ``jobs > 1`` unless ``sequential_timing`` is
    set. Rows are sorted by matrix, method, tol and ordering regardless of
    completion order.
    """
    if not matrices or not specs:
        raise ValueError("run_suite needs at least one matrix and one method")
    _kernels.warm_up()

    cells = []
    for name, a in matrices:
        sdd = check_sdd(a)
        rhs = None
        if rhs_seed is not None:
            rhs = np.random.default_rng(rhs_seed).standard_normal(a.n)
        for spec in specs:
            cells.append((a, spec, name, rhs, sdd))

    def run(cell):
        a, spec, name, rhs, sdd = cell
        return run_method(a, spec, cfg, name, rhs, sequential_timing, sdd)

    if jobs > 1 and not sequential_timing:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(cell) for cell in cells]
    rows.sort(key=_row_key)
    return SuiteResult(rows, method_averages(rows))


def expand_specs(
    methods,
    tols=DEFAULT_TOLS,
    orderings=("natural",),
    shift: float = DEFAULT_SHIFT,
    train_cfg: TrainConfig | None = None,
) -> list[MethodSpec]:
    specs = []
    for ordering in orderings:
        for name in methods:
            for tol in tols:
                tc = (train_cfg or TrainConfig()) if name in ("nn", "nnn") else None
                specs.append(MethodSpec(name, tol, ordering, shift, tc))
    return specs


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows: list[BenchRow], path) -> Path:
    """Write rows as CSV in deterministic (matrix, method, tol, ordering) order."""
    if not rows:
        raise ValueError("no rows to report")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for row in sorted(rows, key=_row_key):
            writer.writerow([_fmt(getattr(row, name)) for name in CSV_FIELDS])
    return path


def _parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true/false, got {text!r}")
    return text == "true"


def _opt_float(text: str) -> float | None:
    return float(text) if text else None


_PARSERS = {
    "matrix": str,
    "n": int,
    "nnz": int,
    "sdd": _parse_bool,
    "method": str,
    "tol": float,
    "ordering": str,
    "iterations": int,
    "converged": _parse_bool,
    "setup": str,
    "nfacts": _opt_float,
    "time_train_s": _opt_float,
    "time_ichol_s": _opt_float,
}


def read_report(path) -> list[BenchRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [BenchRow(**{k: _PARSERS[k](v) for k, v in rec.items()}) for rec in reader]


def emit_summary(averages: list[MethodAverage], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "method", "tol", "ordering", "mean_iterations", "converged", "not_converged"])
        for m in averages:
            writer.writerow(
                [m.label, m.method, _fmt(m.tol), m.ordering, _fmt(m.mean_iterations), m.converged, m.not_converged]
            )
    return path


def generate_laplacian(grid) -> CsrMatrix:
    """5-point (2D) or 7-point (3D) Dirichlet Laplacian on a grid of the given sides."""
    dims = tuple(int(s) for s in grid)
    if len(dims) not in (2, 3) or min(dims) < 2:
        raise ValueError(f"grid must have 2 or 3 sides, each >= 2; got {dims}")
    n = int(np.prod(dims))
    index = np.arange(n).reshape(dims)
    rows = [index.ravel()]
    cols = [index.ravel()]
    vals = [np.full(n, 2.0 * len(dims))]
    for axis in range(len(dims)):
        lo = np.take(index, np.arange(dims[axis] - 1), axis=axis).ravel()
        hi = np.take(index, np.arange(1, dims[axis]), axis=axis).ravel()
        rows += [lo, hi]
        cols += [hi, lo]
        vals += [np.full(lo.size, -1.0), np.full(lo.size, -1.0)]
    return CsrMatrix.from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), symmetric_storage=True
    )


_LAPLACIAN = re.compile(r"^laplacian:(\d+(?:x\d+){1,2})$")


def load_matrix(source: str) -> tuple[str, CsrMatrix]:
    """``laplacian:WxH`` / ``laplacian:WxHxD`` or a Matrix Market path."""
    m = _LAPLACIAN.match(source)
    if m:
        return source, generate_laplacian(m.group(1).split("x"))
    path = Path(source)
    return path.stem, parse_matrix_market(path)
