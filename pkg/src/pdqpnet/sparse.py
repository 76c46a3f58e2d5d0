"""CSR sparse matrices with deterministic products.

All kernels sum left-to-right within a row (or, for the transposed product,
in ascending source-row order), so a product against a transpose built with
:meth:`SparseMatrix.transpose` is bitwise identical to :func:`spmv_transpose`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


@numba.njit(cache=True)
def _csr_matvec(indptr, indices, data, v, out):
    for i in range(indptr.shape[0] - 1):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * v[indices[jj]]
        out[i] = acc


@numba.njit(cache=True)
def _csr_rmatvec(indptr, indices, data, v, out):
    out[:] = 0.0
    for i in range(indptr.shape[0] - 1):
        vi = v[i]
        for jj in range(indptr[i], indptr[i + 1]):
            out[indices[jj]] += data[jj] * vi


@numba.njit(cache=True)
def _csr_matmat(indptr, indices, data, X, out):
    d = X.shape[1]
    for i in range(indptr.shape[0] - 1):
        for t in range(d):
            out[i, t] = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for t in range(d):
                out[i, t] += a * X[j, t]


@numba.njit(cache=True)
def _csr_rmatmat(indptr, indices, data, X, out):
    d = X.shape[1]
    out[:, :] = 0.0
    for i in range(indptr.shape[0] - 1):
        for jj in range(indptr[i], indptr[i + 1]):
            a = data[jj]
            j = indices[jj]
            for t in range(d):
                out[j, t] += a * X[i, t]


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-sparse-row matrix of float64 values.

    Rows are described by ``row_offsets`` (length ``nrows + 1``); column
    indices within a row are strictly increasing.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        for arr in (ro, ci, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", vals)
        self._validate()

    def _validate(self):
        ro, ci = self.row_offsets, self.col_indices
        if self.nrows < 0 or self.ncols < 0:
            raise DimensionError("negative dimension")
        if ro.shape != (self.nrows + 1,) or ro[0] != 0:
            raise DimensionError("row_offsets must have length nrows+1 and start at 0")
        if np.any(np.diff(ro) < 0):
            raise DimensionError("row_offsets must be non-decreasing")
        if ro[-1] != len(self.values) or len(ci) != len(self.values):
            raise DimensionError("row_offsets[-1] must equal the number of stored values")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.ncols):
            raise DimensionError("column index out of range")
        # strictly increasing columns inside each row: a drop is only allowed
        # at a row boundary
        if len(ci) > 1:
            step_ok = np.diff(ci) > 0
            boundary = np.zeros(len(ci) - 1, dtype=bool)
            starts = ro[1:-1]
            starts = starts[(starts > 0) & (starts < len(ci))]
            boundary[starts - 1] = True
            if not np.all(step_ok | boundary):
                raise DimensionError("column indices must be strictly increasing within a row")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        nrows, ncols = dense.shape
        rows, cols = np.nonzero(dense)
        offsets = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        return cls(nrows, ncols, np.cumsum(offsets), cols, dense[rows, cols])

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, vals) -> "SparseMatrix":
        """Build from COO triplets; duplicate coordinates raise."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows) > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if np.any(dup):
                k = int(np.argmax(dup))
                raise ValueError(f"duplicate entry at ({rows[k]}, {cols[k]})")
        if len(rows) and (rows.min() < 0 or rows.max() >= nrows):
            raise DimensionError("row index out of range")
        offsets = np.zeros(nrows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        return cls(nrows, ncols, np.cumsum(offsets), cols, vals)

    @classmethod
    def zeros(cls, nrows, ncols) -> "SparseMatrix":
        return cls(nrows, ncols, np.zeros(nrows + 1, dtype=np.int64), [], [])

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def diag(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=np.float64)
        n = len(d)
        return cls(n, n, np.arange(n + 1), np.arange(n), d)

    # -- views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols))
        out[self.row_indices(), self.col_indices] = self.values
        return out

    def transpose(self) -> "SparseMatrix":
        """Explicit CSR transpose (entries of each new row keep source-row order)."""
        rows = self.row_indices()
        order = np.argsort(self.col_indices, kind="stable")
        offsets = np.zeros(self.ncols + 1, dtype=np.int64)
        np.add.at(offsets, self.col_indices + 1, 1)
        return SparseMatrix(self.ncols, self.nrows, np.cumsum(offsets),
                            rows[order], self.values[order])

    def permute(self, row_perm, col_perm) -> "SparseMatrix":
        """Return ``P_r M P_c^T``: new row i is old row ``row_perm[i]``, likewise columns."""
        row_perm = np.asarray(row_perm, dtype=np.int64)
        col_perm = np.asarray(col_perm, dtype=np.int64)
        inv_r = np.empty_like(row_perm)
        inv_r[row_perm] = np.arange(len(row_perm))
        inv_c = np.empty_like(col_perm)
        inv_c[col_perm] = np.arange(len(col_perm))
        return SparseMatrix.from_triplets(self.nrows, self.ncols, inv_r[self.row_indices()],
                                          inv_c[self.col_indices], self.values)

    def is_symmetric(self) -> bool:
        if self.nrows != self.ncols:
            return False
        t = self.transpose()
        return (np.array_equal(t.row_offsets, self.row_offsets)
                and np.array_equal(t.col_indices, self.col_indices)
                and np.array_equal(t.values, self.values))

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values, other.values))

    __hash__ = None


def spmv(M: SparseMatrix, v, out=None) -> np.ndarray:
    """``M @ v`` (``v`` a vector) or ``M @ V`` (``V`` a 2-D array of columns)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != M.ncols:
        raise DimensionError(f"spmv: operand has {v.shape[0]} rows, matrix has {M.ncols} columns")
    v = np.ascontiguousarray(v)
    if v.ndim == 1:
        if out is None:
            out = np.empty(M.nrows)
        _csr_matvec(M.row_offsets, M.col_indices, M.values, v, out)
    else:
        if out is None:
            out = np.empty((M.nrows, v.shape[1]))
        _csr_matmat(M.row_offsets, M.col_indices, M.values, v, out)
    return out


def spmv_transpose(M: SparseMatrix, v, out=None) -> np.ndarray:
    """``M.T @ v`` without forming the transpose."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != M.nrows:
        raise DimensionError(f"spmv_transpose: operand has {v.shape[0]} rows, matrix has {M.nrows} rows")
    v = np.ascontiguousarray(v)
    if v.ndim == 1:
        if out is None:
            out = np.empty(M.ncols)
        _csr_rmatvec(M.row_offsets, M.col_indices, M.values, v, out)
    else:
        if out is None:
            out = np.empty((M.ncols, v.shape[1]))
        _csr_rmatmat(M.row_offsets, M.col_indices, M.values, v, out)
    return out


def spectral_norm_estimate(M: SparseMatrix, iters: int = 100, seed: int = 0) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    The returned ``||M v||`` for a unit ``v`` never exceeds the true norm.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if M.nnz == 0 or not np.any(M.values):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.ncols)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = spmv_transpose(M, spmv(M, v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector landed in the null space; restart from a fresh draw
            v = rng.standard_normal(M.ncols)
            v /= np.linalg.norm(v)
            continue
        v = w / nw
    return float(np.linalg.norm(spmv(M, v)))
