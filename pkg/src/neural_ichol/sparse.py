"""Sparse storage types and the kernels built on them.

All matrices are square, stored in CSR with sorted column indices and 64-bit
values. Symmetric inputs are kept in full storage; ``symmetric_storage`` only
records that the source was symmetric so writers can fold it back.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels


class SparseError(ValueError):
    """Base class for structural and numerical errors in sparse kernels."""


class DimensionError(SparseError):
    pass


class StructuralError(SparseError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class NotPositiveDiagonalError(SparseError):
    def __init__(self, row: int, value: float):
        super().__init__(f"diagonal entry at row {row} is not positive ({value!r})")
        self.row = row
        self.value = value


class SingularFactorError(SparseError):
    def __init__(self, row: int, value: float):
        super().__init__(f"factor diagonal at row {row} is zero or non-finite ({value!r})")
        self.row = row
        self.value = value


def _check_structure(n: int, row_ptr: np.ndarray, col_idx: np.ndarray) -> None:
    if row_ptr.shape != (n + 1,):
        raise StructuralError(f"row_ptr has length {row_ptr.shape[0]}, expected {n + 1}")
    if row_ptr[0] != 0 or row_ptr[-1] != col_idx.shape[0]:
        raise StructuralError("row_ptr must start at 0 and end at nnz")
    counts = np.diff(row_ptr)
    if np.any(counts < 0):
        raise StructuralError("row_ptr is not non-decreasing")
    if col_idx.size:
        if col_idx.min() < 0 or col_idx.max() >= n:
            raise StructuralError("column index out of range")
        first = np.zeros(col_idx.shape[0], dtype=bool)
        first[row_ptr[:-1][counts > 0]] = True
        bad = np.flatnonzero(~first[1:] & (col_idx[1:] <= col_idx[:-1]))
        if bad.size:
            row = int(np.searchsorted(row_ptr, bad[0] + 1, side="right") - 1)
            raise StructuralError(f"columns in row {row} are not strictly increasing", row=row)


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=np.int64))
        _check_structure(self.n, self.row_ptr, self.col_idx)

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @cached_property
    def rows(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))

    def is_lower(self) -> bool:
        """True if all entries satisfy col <= row and every row ends in its diagonal."""
        if np.any(self.col_idx > self.rows):
            return False
        counts = np.diff(self.row_ptr)
        if np.any(counts == 0):
            return False
        return bool(np.all(self.col_idx[self.row_ptr[1:] - 1] == np.arange(self.n)))

    def entries(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.col_idx.tolist()))

    def same_as(self, other: SparsityPattern) -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    symmetric_storage: bool = False

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.array(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.array(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))
        _check_structure(self.n, self.row_ptr, self.col_idx)
        if self.values.shape != self.col_idx.shape:
            raise StructuralError("values and col_idx lengths differ")
        self.row_ptr.flags.writeable = False
        self.col_idx.flags.writeable = False
        self.values.flags.writeable = False

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.row_ptr))

    @property
    def pattern(self) -> SparsityPattern:
        return SparsityPattern(self.n, self.row_ptr, self.col_idx)

    @cached_property
    def diagonal_positions(self) -> np.ndarray:
        """Index into ``values`` of each diagonal entry, or -1 where missing."""
        pos = np.full(self.n, -1, dtype=np.int64)
        hit = np.flatnonzero(self.col_idx == self.rows)
        pos[self.rows[hit]] = hit
        return pos

    def diagonal(self) -> np.ndarray:
        pos = self.diagonal_positions
        d = np.zeros(self.n)
        d[pos >= 0] = self.values[pos[pos >= 0]]
        return d

    def require_diagonal(self) -> np.ndarray:
        pos = self.diagonal_positions
        missing = np.flatnonzero(pos < 0)
        if missing.size:
            row = int(missing[0])
            raise StructuralError(f"missing diagonal entry in row {row}", row=row)
        return pos

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        np.add.at(out, (self.rows, self.col_idx), self.values)
        return out

    def with_values(self, values: np.ndarray) -> CsrMatrix:
        return CsrMatrix(self.n, self.row_ptr, self.col_idx, values, self.symmetric_storage)

    def is_structurally_symmetric(self) -> bool:
        return self.pattern.entries() == {(j, i) for i, j in self.pattern.entries()}

    def is_symmetric(self) -> bool:
        fwd = dict(zip(zip(self.rows.tolist(), self.col_idx.tolist()), self.values.tolist()))
        return all(fwd.get((j, i)) == v for (i, j), v in fwd.items())

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals, symmetric_storage: bool = False) -> CsrMatrix:
        """Build from coordinates; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise StructuralError("coordinate out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(new) - 1
            summed = np.zeros(int(group[-1]) + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[new], cols[new], summed
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        return cls(n, np.cumsum(row_ptr), cols, vals, symmetric_storage)

    @classmethod
    def from_dense(cls, a, symmetric_storage: bool = False) -> CsrMatrix:
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        r, c = np.nonzero(a)
        return cls.from_coo(a.shape[0], r, c, a[r, c], symmetric_storage)

    @classmethod
    def identity(cls, n: int) -> CsrMatrix:
        idx = np.arange(n)
        return cls(n, np.arange(n + 1), idx, np.ones(n))


@dataclass(frozen=True, eq=False)
class LowerFactor:
    """Lower-triangular factor on a fixed pattern (diagonal last in each row)."""

    pattern: SparsityPattern
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.pattern.nnz,):
            raise StructuralError("factor values do not match pattern size")
        if not self.pattern.is_lower():
            raise StructuralError("factor pattern must be lower triangular with diagonals")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.pattern.n

    @property
    def nnz(self) -> int:
        return self.pattern.nnz

    @property
    def diagonal_positions(self) -> np.ndarray:
        return self.pattern.row_ptr[1:] - 1

    def diagonal(self) -> np.ndarray:
        return self.values[self.diagonal_positions]

    def with_values(self, values: np.ndarray) -> LowerFactor:
        return LowerFactor(self.pattern, values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.pattern.rows, self.pattern.col_idx] = self.values
        return out

    def as_matrix(self) -> CsrMatrix:
        return CsrMatrix(self.n, self.pattern.row_ptr, self.pattern.col_idx, self.values)

    @classmethod
    def from_dense(cls, l) -> LowerFactor:
        """Pattern = nonzeros of the lower triangle plus every diagonal."""
        l = np.tril(np.asarray(l, dtype=np.float64))
        mask = l != 0
        np.fill_diagonal(mask, True)
        r, c = np.nonzero(mask)
        n = l.shape[0]
        row_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(row_ptr, r + 1, 1)
        return cls(SparsityPattern(n, np.cumsum(row_ptr), c), l[r, c])


@dataclass(frozen=True, eq=False)
class Permutation:
    """``perm[old] = new``; ``inv[new] = old``."""

    perm: np.ndarray
    inv: np.ndarray = field(default=None)

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        n = perm.shape[0]
        if not np.array_equal(np.sort(perm), np.arange(n)):
            raise ValueError("perm is not a bijection on [0, n)")
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        if self.inv is not None and not np.array_equal(np.asarray(self.inv), inv):
            raise ValueError("inv is not the inverse of perm")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "inv", inv)

    @property
    def n(self) -> int:
        return int(self.perm.shape[0])

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    @classmethod
    def from_order(cls, order) -> Permutation:
        """From a list of old indices in their new order."""
        order = np.asarray(order, dtype=np.int64)
        perm = np.empty_like(order)
        perm[order] = np.arange(order.shape[0])
        return cls(perm)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Px: entry ``i`` of ``x`` moves to position ``perm[i]``."""
        y = np.empty_like(x)
        y[self.perm] = x
        return y

    def unapply(self, y: np.ndarray) -> np.ndarray:
        return y[self.perm]


@dataclass(frozen=True, eq=False)
class ScalingInfo:
    d_inv_sqrt: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d_inv_sqrt, dtype=np.float64)
        if not (np.all(np.isfinite(d)) and np.all(d > 0)):
            raise ValueError("scaling entries must be finite and positive")
        object.__setattr__(self, "d_inv_sqrt", d)

    @classmethod
    def identity(cls, n: int) -> ScalingInfo:
        return cls(np.ones(n))


def _vector(x, n: int, name: str = "x") -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise DimensionError(f"{name} has shape {x.shape}, expected ({n},)")
    return x


def spmv(a: CsrMatrix, x) -> np.ndarray:
    x = _vector(x, a.n)
    return _kernels.csr_matvec(a.row_ptr, a.col_idx, a.values, x)


def _check_factor(l: LowerFactor) -> None:
    row = _kernels.bad_diagonal_row(l.pattern.row_ptr, l.values)
    if row >= 0:
        raise SingularFactorError(int(row), float(l.diagonal()[row]))


def lower_solve(l: LowerFactor, b) -> np.ndarray:
    """Solve L x = b by forward substitution."""
    b = _vector(b, l.n, "b")
    _check_factor(l)
    return _kernels.forward_substitution(l.pattern.row_ptr, l.pattern.col_idx, l.values, b)


def upper_solve_transposed(l: LowerFactor, b) -> np.ndarray:
    """Solve L^T x = b by backward substitution over the stored lower pattern."""
    b = _vector(b, l.n, "b")
    _check_factor(l)
    return _kernels.backward_substitution_transposed(
        l.pattern.row_ptr, l.pattern.col_idx, l.values, b
    )


def extract_lower_pattern(a: CsrMatrix) -> SparsityPattern:
    a.require_diagonal()
    keep = a.col_idx <= a.rows
    row_ptr = np.zeros(a.n + 1, dtype=np.int64)
    np.add.at(row_ptr, a.rows[keep] + 1, 1)
    return SparsityPattern(a.n, np.cumsum(row_ptr), a.col_idx[keep])


def lower_values(a: CsrMatrix) -> np.ndarray:
    """Values of ``a`` on ``extract_lower_pattern(a)``, in the same order."""
    return a.values[a.col_idx <= a.rows]


def bandwidth(a: CsrMatrix) -> int:
    if a.nnz == 0:
        return 0
    return int(np.abs(a.rows - a.col_idx).max())


def _adjacency(a: CsrMatrix) -> list[np.ndarray]:
    off = a.col_idx != a.rows
    cols = a.col_idx[off]
    ptr = np.concatenate(([0], np.cumsum(np.bincount(a.rows[off], minlength=a.n))))
    return [cols[ptr[i] : ptr[i + 1]] for i in range(a.n)]


def rcm_order(a: CsrMatrix) -> Permutation:
    """Reverse Cuthill-McKee ordering.

    Each connected component is rooted at its minimum-degree vertex (ties to
    the smaller index); components are processed in ascending root index;
    neighbours are enqueued by increasing degree, ties to the smaller index.
    """
    adj = _adjacency(a)
    degree = np.array([len(nb) for nb in adj], dtype=np.int64)

    comp = np.full(a.n, -1, dtype=np.int64)
    roots = []
    for start in range(a.n):
        if comp[start] >= 0:
            continue
        cid = len(roots)
        comp[start] = cid
        members = [start]
        stack = [start]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if comp[w] < 0:
                    comp[w] = cid
                    members.append(int(w))
                    stack.append(int(w))
        roots.append(min(members, key=lambda v: (degree[v], v)))

    visited = np.zeros(a.n, dtype=bool)
    order = []
    for root in sorted(roots):
        visited[root] = True
        queue = deque([root])
        while queue:
            v = queue.popleft()
            order.append(v)
            fresh = [int(w) for w in adj[v] if not visited[w]]
            fresh.sort(key=lambda w: (degree[w], w))
            for w in fresh:
                visited[w] = True
                queue.append(w)
    return Permutation.from_order(order[::-1])


def symmetric_permute(a: CsrMatrix, p: Permutation) -> CsrMatrix:
    """P A P^T, so that entry (i, j) moves to (perm[i], perm[j])."""
    if p.n != a.n:
        raise DimensionError(f"permutation of size {p.n} for matrix of size {a.n}")
    return CsrMatrix.from_coo(
        a.n, p.perm[a.rows], p.perm[a.col_idx], a.values, a.symmetric_storage
    )


def jacobi_scale(a: CsrMatrix) -> tuple[CsrMatrix, ScalingInfo]:
    """D^{-1/2} A D^{-1/2} with D = diag(A); stored diagonals are set to exactly 1."""
    pos = a.require_diagonal()
    d = a.values[pos]
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise NotPositiveDiagonalError(int(bad[0]), float(d[bad[0]]))
    s = 1.0 / np.sqrt(d)
    # multiply by the product so symmetric inputs stay bitwise symmetric
    vals = a.values * (s[a.rows] * s[a.col_idx])
    vals[pos] = 1.0
    return a.with_values(vals), ScalingInfo(s)


def diagonal_shift(a: CsrMatrix, shift: float) -> CsrMatrix:
    """A + shift * diag(diag(A)); off-diagonal entries are left untouched."""
    if not np.isfinite(shift):
        raise ValueError(f"shift must be finite, got {shift!r}")
    pos = a.require_diagonal()
    vals = a.values.copy()
    vals[pos] = vals[pos] * (1.0 + shift)
    return a.with_values(vals)


def check_sdd(a: CsrMatrix) -> bool:
    """True iff |a_ii| >= sum_{j != i} |a_ij| on every row."""
    absval = np.abs(a.values)
    on = a.col_idx == a.rows
    diag = np.bincount(a.rows[on], weights=absval[on], minlength=a.n)
    off = np.bincount(a.rows[~on], weights=absval[~on], minlength=a.n)
    return bool(np.all(diag >= off))
