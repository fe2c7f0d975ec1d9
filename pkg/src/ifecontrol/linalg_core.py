"""Small dense solves and a compressed-row sparse matrix.

The dense LU is used for the 6x6 constraint systems that define the
immersed basis functions, so it is kept here in plain numpy where every
pivot decision is visible.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = ["SingularMatrixError", "lu_solve_small", "SparseCSR"]

PIVOT_RTOL = 1e-14
MAX_DENSE = 8


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a pivot falls below ``PIVOT_RTOL * max|A|``."""


def lu_solve_small(A, b):
    """Solve ``A x = b`` for a square matrix of size at most 8.

    Gaussian elimination with partial pivoting.  ``b`` may be a vector or a
    matrix of right-hand sides (one per column).
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if n > MAX_DENSE:
        raise ValueError(f"lu_solve_small handles at most {MAX_DENSE}x{MAX_DENSE}, got {n}")
    vector_rhs = b.ndim == 1
    B = b.reshape(n, -1).copy()
    if B.shape[0] != n:
        raise ValueError("right-hand side does not match the matrix size")

    scale = np.abs(A).max()
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    threshold = PIVOT_RTOL * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) < threshold:
            raise SingularMatrixError(f"pivot {abs(A[p, k]):.3e} in column {k} below {threshold:.3e}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            B[[k, p]] = B[[p, k]]
        factors = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(factors, A[k, k:])
        B[k + 1:] -= np.outer(factors, B[k])
    X = np.empty_like(B)
    for k in range(n - 1, -1, -1):
        X[k] = (B[k] - A[k, k + 1:] @ X[k + 1:]) / A[k, k]
    return X[:, 0] if vector_rhs else X


class SparseCSR:
    """Compressed sparse row matrix with a deterministic matrix-vector product.

    Construction (duplicate summation, slicing) leans on ``scipy.sparse``;
    the product itself accumulates each row in ascending column order.
    """

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=float)
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    @classmethod
    def from_scipy(cls, M):
        M = sp.csr_matrix(M)
        M.sum_duplicates()
        M.sort_indices()
        return cls(M.indptr, M.indices, M.data, M.shape)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, drop_zeros=True):
        M = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
        M.sum_duplicates()
        if drop_zeros:
            M.eliminate_zeros()
        return cls.from_scipy(M)

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"))

    @property
    def nnz(self):
        return int(self.data.size)

    def spmv(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError(f"dimension mismatch: matrix {self.shape}, vector {x.shape}")
        return np.bincount(self._rows, weights=self.data * x[self.indices], minlength=self.shape[0])

    def __matmul__(self, x):
        return self.spmv(x)

    def diagonal(self):
        return self.to_scipy().diagonal()

    def to_scipy(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        return self.to_scipy().toarray()

    def transpose(self):
        return SparseCSR.from_scipy(self.to_scipy().T)

    @property
    def T(self):
        return self.transpose()

    def submatrix(self, rows, cols):
        return SparseCSR.from_scipy(self.to_scipy()[rows][:, cols])

    def max_asymmetry(self):
        M = self.to_scipy()
        D = M - M.T
        return float(abs(D).max()) if D.nnz else 0.0

    def __repr__(self):
        return f"SparseCSR(shape={self.shape}, nnz={self.nnz})"
