"""Row-compressed storage for complex matrices with pruned exact zeros."""

from __future__ import annotations

import numpy as np
from scipy import sparse as sp


class SparseFormatError(ValueError):
    """Invalid sparse matrix construction."""


class SparseComplexMatrix:
    """Square complex matrix in CSR form.

    Exact zeros are never stored and every row keeps at least one entry
    (rows are guaranteed nonempty by the singularity window of whichever
    window set produced the pattern).
    """

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray, data: np.ndarray):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=complex)
        if indptr.shape != (n + 1,) or indptr[0] != 0 or indptr[-1] != len(data):
            raise SparseFormatError("inconsistent CSR index pointers")
        if len(indices) != len(data):
            raise SparseFormatError("indices/data length mismatch")
        if np.any(np.diff(indptr) == 0):
            raise SparseFormatError("empty rows are not allowed")
        if np.any(data == 0.0):
            raise SparseFormatError("exact zeros must be pruned before storage")
        self.n = n
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self._csr = sp.csr_matrix((data, indices, indptr), shape=(n, n))

    @classmethod
    def from_rows(cls, n: int, rows: list[tuple[np.ndarray, np.ndarray]]) -> "SparseComplexMatrix":
        """Build from per-row (columns, values) pairs; zero values are dropped."""
        if len(rows) != n:
            raise SparseFormatError("need exactly one (cols, vals) pair per row")
        indptr = np.zeros(n + 1, dtype=np.int64)
        all_cols, all_vals = [], []
        for i, (cols, vals) in enumerate(rows):
            cols = np.asarray(cols, dtype=np.int64)
            vals = np.asarray(vals, dtype=complex)
            keep = vals != 0.0
            cols, vals = cols[keep], vals[keep]
            order = np.argsort(cols)
            all_cols.append(cols[order])
            all_vals.append(vals[order])
            indptr[i + 1] = indptr[i] + len(cols)
        indices = np.concatenate(all_cols) if all_cols else np.empty(0, dtype=np.int64)
        data = np.concatenate(all_vals) if all_vals else np.empty(0, dtype=complex)
        return cls(n, indptr, indices, data)

    @classmethod
    def from_dense(cls, A: np.ndarray) -> "SparseComplexMatrix":
        n = A.shape[0]
        rows = []
        for i in range(n):
            cols = np.nonzero(A[i] != 0.0)[0]
            rows.append((cols, A[i, cols]))
        return cls.from_rows(n, rows)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def nnz_fraction(self) -> float:
        return self.nnz / float(self.n) ** 2

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.indptr)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.n,):
            raise SparseFormatError(f"operand length {x.shape} does not match n={self.n}")
        return self._csr @ x

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_csr(self) -> sp.csr_matrix:
        return self._csr

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.data[sl]

    def save_pattern(self, path) -> None:
        """Text triplets ``i j re im`` under an ``N nnz`` header."""
        with open(path, "w") as fh:
            fh.write(f"{self.n} {self.nnz}\n")
            for i in range(self.n):
                cols, vals = self.row(i)
                for j, v in zip(cols, vals):
                    fh.write(f"{i} {j} {float(v.real)!r} {float(v.imag)!r}\n")
