"""Compiled inner loops over raw CSR arrays.

Every kernel takes ``(row_ptr, col_idx, values)`` triplets. Lower-triangular
factors are stored row-wise with sorted columns, so the diagonal of row ``i``
sits at ``row_ptr[i + 1] - 1``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def csr_matvec(row_ptr, col_idx, values, x):
    n = row_ptr.shape[0] - 1
    y = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        y[i] = acc
    return y


@njit(cache=True, nogil=True)
def csr_rmatvec(row_ptr, col_idx, values, x):
    """y = A^T x for a square CSR matrix."""
    n = row_ptr.shape[0] - 1
    y = np.zeros(n, dtype=np.float64)
    for i in range(n):
        xi = x[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            y[col_idx[k]] += values[k] * xi
    return y


@njit(cache=True, nogil=True)
def forward_substitution(row_ptr, col_idx, values, b):
    n = row_ptr.shape[0] - 1
    x = np.empty(n, dtype=np.float64)
    for i in range(n):
        end = row_ptr[i + 1] - 1
        acc = b[i]
        for k in range(row_ptr[i], end):
            acc -= values[k] * x[col_idx[k]]
        x[i] = acc / values[end]
    return x


@njit(cache=True, nogil=True)
def backward_substitution_transposed(row_ptr, col_idx, values, b):
    """Solve L^T x = b with L stored row-wise (column sweep over L^T)."""
    n = row_ptr.shape[0] - 1
    x = b.copy()
    for i in range(n - 1, -1, -1):
        end = row_ptr[i + 1] - 1
        xi = x[i] / values[end]
        x[i] = xi
        for k in range(row_ptr[i], end):
            x[col_idx[k]] -= values[k] * xi
    return x


@njit(cache=True, nogil=True)
def bad_diagonal_row(row_ptr, values):
    """First row whose stored diagonal is zero or non-finite, else -1."""
    n = row_ptr.shape[0] - 1
    for i in range(n):
        d = values[row_ptr[i + 1] - 1]
        if d == 0.0 or not math.isfinite(d):
            return i
    return -1


@njit(cache=True, nogil=True)
def ichol0_rows(row_ptr, col_idx, lower_values):
    """Up-looking zero-fill incomplete Cholesky over a lower CSR pattern.

    Returns ``(values, bad_row, pivot)``; ``bad_row`` is -1 on success,
    otherwise the first row whose pivot is not strictly positive.
    """
    n = row_ptr.shape[0] - 1
    out = lower_values.copy()
    work = np.zeros(n, dtype=np.float64)
    for i in range(n):
        start = row_ptr[i]
        diag = row_ptr[i + 1] - 1
        for k in range(start, diag):
            j = col_idx[k]
            # work holds l_ik for k < j already finalized in this row
            s = 0.0
            for m in range(row_ptr[j], row_ptr[j + 1] - 1):
                s += out[m] * work[col_idx[m]]
            lij = (out[k] - s) / out[row_ptr[j + 1] - 1]
            out[k] = lij
            work[j] = lij
        pivot = out[diag]
        for k in range(start, diag):
            pivot -= out[k] * out[k]
        for k in range(start, diag):
            work[col_idx[k]] = 0.0
        if not pivot > 0.0:
            return out, i, pivot
        out[diag] = math.sqrt(pivot)
    return out, -1, 0.0


def warm_up() -> None:
    """Compile every kernel so later timings exclude JIT cost."""
    rp = np.array([0, 1, 3], dtype=np.int64)
    ci = np.array([0, 0, 1], dtype=np.int64)
    v = np.array([2.0, 1.0, 2.0])
    x = np.ones(2)
    csr_matvec(rp, ci, v, x)
    csr_rmatvec(rp, ci, v, x)
    forward_substitution(rp, ci, v, x)
    backward_substitution_transposed(rp, ci, v, x)
    bad_diagonal_row(rp, v)
    ichol0_rows(rp, ci, v)
