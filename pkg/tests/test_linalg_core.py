import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ifecontrol.linalg_core import SingularMatrixError, SparseCSR, lu_solve_small


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(lu_solve_small(np.eye(3), b), b)


def test_hilbert_row_sums():
    H = np.array([[1.0 / (i + j + 1) for j in range(3)] for i in range(3)])
    x = lu_solve_small(H, H.sum(axis=1))
    np.testing.assert_allclose(x, np.ones(3), atol=1e-10)


def test_singular_rejected():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError):
        lu_solve_small(A, np.ones(2))


def test_too_large_rejected():
    with pytest.raises(ValueError):
        lu_solve_small(np.eye(9), np.ones(9))


def test_multiple_right_hand_sides():
    A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
    B = np.arange(9.0).reshape(3, 3)
    np.testing.assert_allclose(A @ lu_solve_small(A, B), B, atol=1e-13)


@given(arrays(np.float64, (6, 6), elements=st.floats(-1, 1)), arrays(np.float64, 6, elements=st.floats(-1, 1)))
def test_lu_residual_small_for_well_conditioned(M, b):
    A = M + 8.0 * np.eye(6)  # diagonally dominant
    x = lu_solve_small(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * max(np.linalg.norm(b), 1e-300) + 1e-300


def test_spmv_identity_and_zero():
    x = np.linspace(-1, 1, 7)
    np.testing.assert_array_equal(SparseCSR.identity(7).spmv(x), x)
    Z = SparseCSR.from_coo([], [], [], (7, 7))
    np.testing.assert_array_equal(Z.spmv(x), np.zeros(7))


def test_spmv_against_dense(rng):
    D = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < 0.2)
    A = SparseCSR.from_scipy(sp.csr_matrix(D))
    x = rng.standard_normal(50)
    ref = D @ x
    assert np.linalg.norm(A.spmv(x) - ref) <= 1e-13 * np.linalg.norm(ref)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        SparseCSR.identity(3).spmv(np.ones(4))


def test_column_indices_sorted_and_no_explicit_zeros():
    A = SparseCSR.from_coo([0, 0, 1, 1, 1], [2, 0, 1, 1, 0], [1.0, 2.0, 3.0, -3.0, 4.0], (2, 3))
    for r in range(2):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        assert np.all(np.diff(cols) > 0)
    assert np.all(A.data != 0.0)
    np.testing.assert_array_equal(A.to_dense(), [[2.0, 0.0, 1.0], [4.0, 0.0, 0.0]])


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10), st.floats(-10, 10))
def test_spmv_linearity(seed, a, b):
    g = np.random.default_rng(seed)
    D = g.standard_normal((20, 20)) * (g.random((20, 20)) < 0.3)
    A = SparseCSR.from_scipy(sp.csr_matrix(D))
    x, y = g.standard_normal(20), g.standard_normal(20)
    lhs = A.spmv(a * x + b * y)
    rhs = a * A.spmv(x) + b * A.spmv(y)
    # relative to the size of the terms, since a*Ax + b*Ay may cancel
    scale = abs(a) * np.linalg.norm(A.spmv(x)) + abs(b) * np.linalg.norm(A.spmv(y))
    assert np.linalg.norm(lhs - rhs) <= 1e-13 * scale


def test_transpose_and_asymmetry():
    D = np.array([[1.0, 2.0], [0.0, 3.0]])
    A = SparseCSR.from_scipy(sp.csr_matrix(D))
    np.testing.assert_array_equal(A.T.to_dense(), D.T)
    assert A.max_asymmetry() == 2.0
