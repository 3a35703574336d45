"""Zero-fill incomplete Cholesky and a dense Cholesky reference."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .sparse import CsrMatrix, LowerFactor, SparseError, extract_lower_pattern, lower_values


class BreakdownError(SparseError):
    """A pivot was not strictly positive during factorization."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"factorization breakdown at row {row}: pivot {pivot!r} <= 0")
        self.row = row
        self.pivot = pivot


def ichol0(a: CsrMatrix) -> LowerFactor:
    """Incomplete Cholesky restricted to the lower pattern of ``a``.

    Row ``i`` is computed up-looking from rows ``j < i``; any product landing
    outside the pattern is dropped. Raises :class:`BreakdownError` at the
    first row whose pivot ``a_ii - sum_k l_ik**2`` is not strictly positive.
    """
    pattern = extract_lower_pattern(a)
    values, bad_row, pivot = _kernels.ichol0_rows(
        pattern.row_ptr, pattern.col_idx, lower_values(a)
    )
    if bad_row >= 0:
        raise BreakdownError(int(bad_row), float(pivot))
    return LowerFactor(pattern, values)


def chol_dense(a) -> np.ndarray:
    """Plain right-looking Cholesky for small dense matrices.

    Used as an oracle, so it avoids LAPACK and reports the failing row.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    l = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - l[j, :j] @ l[j, :j]
        if not pivot > 0:
            raise BreakdownError(j, float(pivot))
        l[j, j] = np.sqrt(pivot)
        l[j + 1 :, j] = (a[j + 1 :, j] - l[j + 1 :, :j] @ l[j, :j]) / l[j, j]
    return l
