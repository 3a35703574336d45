"""Preconditioned conjugate gradient with an L L^T preconditioner."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .sparse import (
    CsrMatrix,
    DimensionError,
    LowerFactor,
    ScalingInfo,
    lower_solve,
    spmv,
    upper_solve_transposed,
)


class BreakdownReason(str, enum.Enum):
    INDEFINITE_CURVATURE = "indefinite_curvature"
    STAGNATION = "stagnation"
    SINGULAR_PRECONDITIONER = "singular_preconditioner"


@dataclass(frozen=True)
class SolveConfig:
    tol: float = 1e-5
    max_iters: int = 10_000
    record_history: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    final_relres: float
    residual_history: list[float] | None = None
    breakdown_reason: BreakdownReason | None = None


@dataclass(frozen=True, eq=False)
class Preconditioner:
    """``none``, ``llt`` (M = L L^T) or ``scaled_llt`` (M = D^{1/2} L L^T D^{1/2})."""

    kind: str = "none"
    factor: LowerFactor | None = None
    scaling: ScalingInfo | None = None

    def __post_init__(self):
        if self.kind not in ("none", "llt", "scaled_llt"):
            raise ValueError(f"unknown preconditioner kind {self.kind!r}")
        if self.kind != "none" and self.factor is None:
            raise ValueError(f"{self.kind} preconditioner needs a factor")
        if self.kind == "scaled_llt" and self.scaling is None:
            raise ValueError("scaled_llt preconditioner needs scaling info")

    @classmethod
    def none(cls) -> Preconditioner:
        return cls("none")

    @classmethod
    def llt(cls, factor: LowerFactor) -> Preconditioner:
        return cls("llt", factor)

    @classmethod
    def scaled_llt(cls, factor: LowerFactor, scaling: ScalingInfo) -> Preconditioner:
        return cls("scaled_llt", factor, scaling)

    @property
    def n(self) -> int | None:
        return None if self.factor is None else self.factor.n


def apply_preconditioner(m: Preconditioner, r) -> np.ndarray:
    """z = M^{-1} r."""
    r = np.asarray(r, dtype=np.float64)
    if m.kind == "none":
        return r.copy()
    if m.kind == "llt":
        return upper_solve_transposed(m.factor, lower_solve(m.factor, r))
    s = m.scaling.d_inv_sqrt
    if s.shape != r.shape:
        raise DimensionError(f"scaling has length {s.shape[0]}, vector {r.shape[0]}")
    return s * upper_solve_transposed(m.factor, lower_solve(m.factor, s * r))


def _fast_apply(m: Preconditioner):
    """Unchecked z = M^{-1} r for the solver loop (factor validated once up front)."""
    if m.kind == "none":
        return lambda r: r.copy()
    p = m.factor.pattern
    rp, ci, v = p.row_ptr, p.col_idx, m.factor.values

    def solve(r):
        return _kernels.backward_substitution_transposed(
            rp, ci, v, _kernels.forward_substitution(rp, ci, v, r)
        )

    if m.kind == "llt":
        return solve
    s = m.scaling.d_inv_sqrt
    return lambda r: s * solve(s * r)


def cg_solve(
    a: CsrMatrix, b, m: Preconditioner = Preconditioner.none(), cfg: SolveConfig = SolveConfig()
) -> tuple[np.ndarray, SolveReport]:
    """PCG from x0 = 0, stopping when ||b - A x||_2 / ||b||_2 <= tol.

    Convergence is first detected on the recurrence residual and then confirmed
    against the true residual; if the two disagree the residual is replaced
    and the search direction restarted. Numerical trouble is reported in the
    returned :class:`SolveReport`, never raised.
    """
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (a.n,):
        raise DimensionError(f"b has shape {b.shape}, expected ({a.n},)")
    if m.n is not None and m.n != a.n:
        raise DimensionError(f"preconditioner of size {m.n} for matrix of size {a.n}")
    if m.kind == "scaled_llt" and m.scaling.d_inv_sqrt.shape != (a.n,):
        raise DimensionError("scaling length does not match matrix")

    history = [] if cfg.record_history else None
    x = np.zeros(a.n)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        if history is not None:
            history.append(0.0)
        return x, SolveReport(0, True, 0.0, history)

    def report(k, converged, relres, reason=None):
        return SolveReport(k, converged, relres, history, reason)

    if m.factor is not None:
        bad = _kernels.bad_diagonal_row(m.factor.pattern.row_ptr, m.factor.values)
        if bad >= 0:
            return x, report(0, False, 1.0, BreakdownReason.SINGULAR_PRECONDITIONER)
    precond = _fast_apply(m)
    matvec = lambda v: _kernels.csr_matvec(a.row_ptr, a.col_idx, a.values, v)  # noqa: E731

    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    if history is not None:
        history.append(1.0)

    k = 0
    while k < cfg.max_iters:
        ap = matvec(p)
        curvature = float(p @ ap)
        if not np.isfinite(curvature) or not np.isfinite(rz):
            return x, report(k, False, _true_relres(a, b, x, bnorm), BreakdownReason.STAGNATION)
        if curvature <= 0.0:
            return x, report(
                k, False, _true_relres(a, b, x, bnorm), BreakdownReason.INDEFINITE_CURVATURE
            )
        step = rz / curvature
        x += step * p
        r -= step * ap
        k += 1
        relres = float(np.linalg.norm(r)) / bnorm
        if relres <= cfg.tol:
            r = b - matvec(x)
            relres = float(np.linalg.norm(r)) / bnorm
            if history is not None:
                history.append(relres)
            if relres <= cfg.tol:
                return x, report(k, True, relres)
            # recurrence drifted from the true residual: restart from it
            z = precond(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        if history is not None:
            history.append(relres)
        z = precond(r)
        rz_next = float(r @ z)
        if rz == 0.0 or not np.isfinite(rz_next):
            return x, report(k, False, _true_relres(a, b, x, bnorm), BreakdownReason.STAGNATION)
        p = z + (rz_next / rz) * p
        rz = rz_next
    return x, report(k, False, _true_relres(a, b, x, bnorm))


def _true_relres(a: CsrMatrix, b: np.ndarray, x: np.ndarray, bnorm: float) -> float:
    return float(np.linalg.norm(b - spmv(a, x))) / bnorm


def make_rhs(a: CsrMatrix) -> np.ndarray:
    """b = A @ ones, so the exact solution is the ones vector."""
    return spmv(a, np.ones(a.n))


def random_rhs(a: CsrMatrix, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(a.n)
