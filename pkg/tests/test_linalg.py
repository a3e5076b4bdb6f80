"""Sparse and dense solvers, the snapshot SVD, and the bordered system."""

import numpy as np
import pytest
import scipy.sparse as sp

from rom_apod import (SingularMatrixError, SolverFailure, border_system,
                      solve_dense, solve_sparse, thin_svd)


def random_dd_matrix(rng, n, density=0.1):
    """Random diagonally dominant sparse matrix; GMRES-friendly."""
    A = sp.random(n, n, density=density, random_state=rng, format="csr")
    A = A + sp.diags(np.asarray(np.abs(A).sum(axis=1)).ravel() + 1.0)
    return A.tocsr()


def test_solve_sparse_matches_dense_lu():
    rng = np.random.default_rng(11)
    for _ in range(5):
        A = random_dd_matrix(rng, 80)
        rhs = rng.standard_normal(80)
        x = solve_sparse(A, rhs, rel_tol=1e-12)
        expected = np.linalg.solve(A.toarray(), rhs)
        np.testing.assert_allclose(x, expected, rtol=1e-8, atol=1e-10)
        assert np.linalg.norm(A @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_solve_sparse_zero_rhs_short_circuits():
    A = sp.eye(10, format="csr")
    x = solve_sparse(A, np.zeros(10))
    np.testing.assert_array_equal(x, np.zeros(10))


def test_solve_sparse_accepts_warm_start():
    rng = np.random.default_rng(12)
    A = random_dd_matrix(rng, 60)
    x_true = rng.standard_normal(60)
    rhs = A @ x_true
    x = solve_sparse(A, rhs, rel_tol=1e-12, x0=x_true)
    np.testing.assert_allclose(x, x_true, rtol=1e-10)


def test_solve_sparse_failure_reports_achieved_residual():
    # an unsymmetric dense-spectrum matrix cannot converge in 2 iterations
    rng = np.random.default_rng(13)
    A = sp.csr_matrix(rng.standard_normal((50, 50)) + 10.0 * np.eye(50))
    rhs = rng.standard_normal(50)
    with pytest.raises(SolverFailure) as exc_info:
        solve_sparse(A, rhs, rel_tol=1e-14, restart=2, max_iter=1)
    res = exc_info.value.residual
    assert np.isfinite(res) and res > 1e-14


def test_solve_sparse_shape_checks():
    A = sp.eye(4, format="csr")
    with pytest.raises(ValueError):
        solve_sparse(A, np.zeros(5))
    with pytest.raises(ValueError):
        solve_sparse(sp.csr_matrix(np.ones((3, 4))), np.zeros(3))


def test_solve_dense_matches_numpy():
    rng = np.random.default_rng(21)
    for _ in range(10):
        A = rng.standard_normal((30, 30)) + 5.0 * np.eye(30)
        rhs = rng.standard_normal(30)
        np.testing.assert_allclose(solve_dense(A, rhs), np.linalg.solve(A, rhs),
                                   rtol=1e-10, atol=1e-12)


def test_solve_dense_rejects_singular():
    A = np.ones((4, 4))
    with pytest.raises(SingularMatrixError):
        solve_dense(A, np.ones(4))


def test_solve_dense_shape_checks():
    with pytest.raises(ValueError):
        solve_dense(np.ones((3, 4)), np.ones(3))
    with pytest.raises(ValueError):
        solve_dense(np.eye(3), np.ones(4))


def test_thin_svd_matches_lapack():
    rng = np.random.default_rng(31)
    for _ in range(10):
        U = rng.standard_normal((40, 7))
        got = thin_svd(U)
        left, sigma, _ = np.linalg.svd(U, full_matrices=False)
        np.testing.assert_allclose(got.singular_values, sigma, rtol=1e-10)
        assert got.rank == 7
        # vectors agree up to sign
        overlap = np.abs(got.left_vectors.T @ left[:, :7])
        np.testing.assert_allclose(overlap, np.eye(7), atol=1e-8)


def test_thin_svd_detects_rank_deficiency():
    rng = np.random.default_rng(32)
    base = rng.standard_normal((50, 3))
    U = np.hstack([base, base @ rng.standard_normal((3, 4))])
    got = thin_svd(U)
    assert got.rank == 3
    R = got.left_vectors
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)


def test_thin_svd_zero_and_empty_input():
    assert thin_svd(np.zeros((10, 4))).rank == 0
    assert thin_svd(np.zeros((10, 0))).rank == 0


def test_thin_svd_near_duplicate_columns_stay_orthonormal():
    # the Gram route loses precision on clustered directions; the
    # re-orthonormalization pass has to absorb that
    rng = np.random.default_rng(33)
    a = rng.standard_normal(60)
    U = np.stack([a, a + 1e-9 * rng.standard_normal(60),
                  rng.standard_normal(60)], axis=1)
    got = thin_svd(U)
    R = got.left_vectors
    defect = np.abs(R.T @ R - np.eye(got.rank)).max()
    assert defect < 1e-10


def test_thin_svd_rejects_bad_ndim():
    with pytest.raises(ValueError):
        thin_svd(np.zeros(5))


def test_border_system_block_layout():
    rng = np.random.default_rng(41)
    A = rng.standard_normal((3, 3))
    col = rng.standard_normal((3, 2))
    row = rng.standard_normal((2, 3))
    corner = rng.standard_normal((2, 2))
    M = border_system(A, col, row, corner)
    assert M.shape == (5, 5)
    np.testing.assert_array_equal(M[:3, :3], A)
    np.testing.assert_array_equal(M[:3, 3:], col)
    np.testing.assert_array_equal(M[3:, :3], row)
    np.testing.assert_array_equal(M[3:, 3:], corner)


def test_border_system_scalar_corner():
    M = border_system(np.eye(2), np.ones((2, 1)), np.zeros((1, 2)), 4.0)
    np.testing.assert_array_equal(M, [[1, 0, 1], [0, 1, 1], [0, 0, 4]])
