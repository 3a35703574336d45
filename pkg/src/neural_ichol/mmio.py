"""Matrix Market coordinate reader and writer (real, general or symmetric)."""

from __future__ import annotations

import io
import os
from pathlib import Path
from typing import IO, Union

import numpy as np

from .sparse import CsrMatrix, LowerFactor, SparsityPattern

PathOrFile = Union[str, os.PathLike, IO[str], IO[bytes]]


class MatrixMarketError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _lines(source) -> list[str]:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("ascii", errors="replace").splitlines()
    if isinstance(source, (str, os.PathLike)):
        text = Path(source).read_text(encoding="ascii", errors="replace")
        return text.splitlines()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="replace")
    return data.splitlines()


def parse_matrix_market(source: PathOrFile | bytes) -> CsrMatrix:
    """Parse a square real coordinate matrix.

    ``source`` may be a path, an open file, or raw bytes. Symmetric inputs are
    expanded to full storage; duplicate coordinates are summed.
    """
    lines = _lines(source)
    if not lines:
        raise MatrixMarketError("empty input", 1)
    banner = lines[0].split()
    if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket banner", 1)
    obj, fmt, field, symmetry = (t.lower() for t in banner[1:])
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"unsupported object/format {obj} {fmt}", 1)
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unsupported field {field!r}", 1)
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1)
    symmetric = symmetry == "symmetric"

    lineno = 1
    size_line = None
    for lineno in range(2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if text and not text.startswith("%"):
            size_line = text
            break
    if size_line is None:
        raise MatrixMarketError("missing size line", lineno)
    try:
        nrows, ncols, nnz = (int(t) for t in size_line.split())
    except ValueError:
        raise MatrixMarketError(f"malformed size line {size_line!r}", lineno) from None
    if nrows != ncols:
        raise MatrixMarketError(f"matrix is not square ({nrows} x {ncols})", lineno)
    if nnz < 0 or nrows < 0:
        raise MatrixMarketError("negative sizes", lineno)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {text!r}", lineno)
        if k >= nnz:
            raise MatrixMarketError(f"more than {nnz} entries", lineno)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"malformed entry {text!r}", lineno) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range", lineno)
        if symmetric and j > i:
            raise MatrixMarketError(f"upper-triangle entry ({i}, {j}) in symmetric file", lineno)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {k}", len(lines))

    if symmetric:
        off = rows != cols
        rows, cols, vals = (
            np.concatenate((rows, cols[off])),
            np.concatenate((cols, rows[off])),
            np.concatenate((vals, vals[off])),
        )
    return CsrMatrix.from_coo(nrows, rows, cols, vals, symmetric_storage=symmetric)


def format_matrix_market(a: CsrMatrix, symmetric: bool | None = None, comment: str = "") -> str:
    """Serialize to Matrix Market text; symmetric matrices keep the lower triangle only."""
    if symmetric is None:
        symmetric = a.symmetric_storage
    rows, cols, vals = a.rows, a.col_idx, a.values
    if symmetric:
        keep = cols <= rows
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    out = io.StringIO()
    out.write(f"%%MatrixMarket matrix coordinate real {'symmetric' if symmetric else 'general'}\n")
    for line in comment.splitlines():
        out.write(f"% {line}\n")
    out.write(f"{a.n} {a.n} {rows.size}\n")
    for i, j, v in zip(rows.tolist(), cols.tolist(), vals.tolist()):
        out.write(f"{i + 1} {j + 1} {v!r}\n")
    return out.getvalue()


def write_matrix_market(a: CsrMatrix, path, symmetric: bool | None = None, comment: str = "") -> Path:
    path = Path(path)
    path.write_text(format_matrix_market(a, symmetric, comment), encoding="ascii")
    return path


def write_factor(l: LowerFactor, path, comment: str = "") -> Path:
    """Write a factor as a general lower-triangular coordinate file."""
    return write_matrix_market(l.as_matrix(), path, symmetric=False, comment=comment)


def read_factor(path) -> LowerFactor:
    a = parse_matrix_market(path)
    return LowerFactor(SparsityPattern(a.n, a.row_ptr, a.col_idx), a.values)
