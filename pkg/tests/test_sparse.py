import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdqpnet.sparse import DimensionError, SparseMatrix, spectral_norm_estimate, spmv, spmv_transpose

from conftest import sparse_matrices


def test_spmv_examples():
    assert np.array_equal(spmv(SparseMatrix.identity(3), np.array([1.0, 2.0, 3.0])), [1, 2, 3])
    assert np.array_equal(spmv(SparseMatrix.zeros(3, 4), np.ones(4)), np.zeros(3))
    M = SparseMatrix.from_dense([[2.0, 0.0], [1.0, 3.0]])
    assert np.array_equal(spmv(M, np.ones(2)), [2, 4])


def test_spmv_transpose_examples():
    v = np.array([4.0, -1.0, 0.5])
    assert np.array_equal(spmv_transpose(SparseMatrix.identity(3), v), v)
    M = SparseMatrix.from_dense([[2.0, 0.0], [1.0, 3.0]])
    assert np.array_equal(spmv_transpose(M, np.ones(2)), [3, 3])
    R = SparseMatrix.from_dense([[5.0, 7.0]])
    assert np.array_equal(spmv_transpose(R, np.array([2.0])), [10, 14])


def test_dimension_mismatch():
    M = SparseMatrix.from_dense([[1.0, 2.0]])
    with pytest.raises(DimensionError):
        spmv(M, np.ones(3))
    with pytest.raises(DimensionError):
        spmv_transpose(M, np.ones(2))


def test_csr_invariants_enforced():
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):  # columns not strictly increasing
        SparseMatrix(1, 3, np.array([0, 2]), np.array([1, 1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):  # column out of range
        SparseMatrix(1, 2, np.array([0, 1]), np.array([2]), np.array([1.0]))
    with pytest.raises(ValueError):
        SparseMatrix.from_triplets(2, 2, [0, 0], [1, 1], [1.0, 2.0])


def test_from_triplets_sorts():
    M = SparseMatrix.from_triplets(2, 3, [1, 0, 0], [0, 2, 0], [5.0, 2.0, 1.0])
    assert np.array_equal(M.to_dense(), [[1, 0, 2], [5, 0, 0]])


def test_spmv_left_to_right_order():
    # (1e16 + 1) - 1e16 is 0 in left-to-right summation and 1 if reordered
    M = SparseMatrix.from_dense([[1e16, 1.0, -1e16]])
    assert spmv(M, np.ones(3))[0] == 0.0


@given(sparse_matrices(), st.integers(0, 2**31 - 1))
def test_adjointness(M, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.ncols)
    w = rng.standard_normal(M.nrows)
    lhs = w @ spmv(M, v)
    rhs = spmv_transpose(M, w) @ v
    scale = np.abs(M.to_dense()).sum() * np.abs(v).max(initial=0) * np.abs(w).max(initial=0)
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1.0)


@given(sparse_matrices(), st.integers(0, 2**31 - 1))
def test_matches_dense(M, seed):
    rng = np.random.default_rng(seed)
    D = M.to_dense()
    v = rng.standard_normal(M.ncols)
    np.testing.assert_allclose(spmv(M, v), D @ v, rtol=1e-12, atol=1e-12)
    X = rng.standard_normal((M.nrows, 3))
    np.testing.assert_allclose(spmv_transpose(M, X), D.T @ X, rtol=1e-12, atol=1e-12)


@given(sparse_matrices())
def test_transpose_is_involution(M):
    assert M.transpose().transpose() == M
    assert np.array_equal(M.transpose().to_dense(), M.to_dense().T)


def test_spectral_norm_examples():
    assert spectral_norm_estimate(SparseMatrix.identity(5)) == pytest.approx(1.0, abs=1e-9)
    assert spectral_norm_estimate(SparseMatrix.diag([3.0, 1.0]), iters=50) == pytest.approx(3.0, abs=1e-6)
    assert spectral_norm_estimate(SparseMatrix.from_dense([[0.0, 2.0], [0.0, 0.0]])) == pytest.approx(2.0, abs=1e-6)
    assert spectral_norm_estimate(SparseMatrix.zeros(3, 3)) == 0.0


@given(sparse_matrices(), st.integers(0, 1000))
def test_spectral_norm_is_lower_bound_and_deterministic(M, seed):
    est = spectral_norm_estimate(M, 30, seed)
    true = np.linalg.norm(M.to_dense(), 2) if M.nnz else 0.0
    assert est <= true * (1 + 1e-12) + 1e-12
    assert est == spectral_norm_estimate(M, 30, seed)
