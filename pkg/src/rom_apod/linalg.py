"""Shared dense and sparse linear algebra kernels.

Sparse systems are solved with restarted GMRES under Jacobi (diagonal)
preconditioning; the returned iterate is always checked against the true
relative residual, not the preconditioned one scipy reports.  The thin SVD
runs through the Gram matrix (method of snapshots), which is the right
trade-off here: snapshot sets are short and wide matrices never appear.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverFailure(RuntimeError):
    """Iterative solve stopped short of the requested tolerance.

    Attributes
    ----------
    residual : float
        Relative residual actually achieved.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(RuntimeError):
    """Dense factorization hit a numerically singular pivot."""


@dataclass
class SvdResult:
    """Thin SVD factors: orthonormal left vectors and the matching
    singular values, descending."""

    left_vectors: np.ndarray
    singular_values: np.ndarray

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]


def solve_sparse(A, rhs: np.ndarray, rel_tol: float = 1e-10,
                 x0: np.ndarray = None, restart: int = 30,
                 max_iter: int = 2000) -> np.ndarray:
    """Solve A x = rhs to a true relative residual of rel_tol.

    Parameters
    ----------
    A : sparse matrix, shape (n, n)
    rhs : ndarray, shape (n,)
    rel_tol : float
        Required bound on ||A x - rhs|| / ||rhs||.
    x0 : ndarray, optional
        Warm-start iterate, e.g. the previous time step.

    Raises
    ------
    SolverFailure
        If the tolerance is out of reach within the iteration budget; the
        exception carries the residual that was achieved.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"system matrix must be square, got {A.shape}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (A.shape[0],):
        raise ValueError(f"rhs shape {rhs.shape} does not match matrix {A.shape}")
    if not rel_tol > 0.0:
        raise ValueError("rel_tol must be positive")

    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)

    A = A.tocsr() if not sp.issparse(A) or A.format != "csr" else A
    diag = A.diagonal().astype(np.float64)
    diag[np.abs(diag) < 1e-300] = 1.0
    M = spla.LinearOperator(A.shape, matvec=lambda v: v / diag)

    x = x0
    gmres_tol = rel_tol
    achieved = np.inf
    for _ in range(4):
        x, _info = spla.gmres(A, rhs, x0=x, rtol=gmres_tol, atol=0.0,
                              restart=restart, maxiter=max_iter, M=M)
        achieved = np.linalg.norm(A @ x - rhs) / rhs_norm
        if achieved <= rel_tol:
            return x
        # Jacobi scaling can make scipy's stopping test optimistic; tighten.
        gmres_tol *= 1e-2
        if gmres_tol < 1e-16:
            break
    raise SolverFailure(
        f"sparse solve stalled at relative residual {achieved:.3e} "
        f"(requested {rel_tol:.3e})", residual=float(achieved))


def solve_dense(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """LU solve of a dense square system.

    Raises
    ------
    SingularMatrixError
        When partial pivoting produces a pivot that is zero to machine
        precision relative to the largest one.
    """
    A = np.asarray(A, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if rhs.shape[0] != A.shape[0]:
        raise ValueError(f"rhs length {rhs.shape[0]} does not match matrix {A.shape}")
    if A.shape[0] == 0:
        return np.zeros_like(rhs)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diagonal(lu))
    if pivots.max() == 0.0 or pivots.min() <= 1e-14 * pivots.max():
        raise SingularMatrixError(
            f"matrix is numerically singular (pivot ratio {pivots.min():.3e} / {pivots.max():.3e})")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def thin_svd(U: np.ndarray, rank_tol: float = 1e-14) -> SvdResult:
    """Left singular vectors and singular values of U via the Gram matrix.

    Forms G = U^T U, eigendecomposes it, and maps eigenpairs back through
    U; eigenvalues at or below rank_tol times the largest are discarded.
    The Gram route can lose orthonormality on the smallest retained
    directions, so the result is re-orthonormalized in place when the
    defect is measurable (leading spans and directions are unchanged).

    Parameters
    ----------
    U : ndarray, shape (n, s)
        Columns are the vectors to decompose; s is expected small.
    rank_tol : float
        Relative eigenvalue cutoff for the numerical rank.

    Returns
    -------
    SvdResult
        Orthonormal left vectors (n, r) and singular values (r,),
        descending; r = 0 when U vanishes.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError(f"expected a 2-d snapshot array, got ndim={U.ndim}")
    n = U.shape[0]
    empty = SvdResult(np.zeros((n, 0)), np.zeros(0))
    if U.shape[1] == 0:
        return empty

    G = U.T @ U
    lam, V = np.linalg.eigh(G)
    lam = lam[::-1]
    V = V[:, ::-1]
    if lam[0] <= 0.0:
        return empty

    keep = lam > rank_tol * lam[0]
    lam = lam[keep]
    V = V[:, keep]
    sigma = np.sqrt(lam)
    R = U @ (V / sigma)

    defect = np.abs(R.T @ R - np.eye(R.shape[1])).max()
    if defect > 1e-11:
        _orthonormalize_inplace(R)
    return SvdResult(R, sigma)


def _orthonormalize_inplace(R: np.ndarray) -> None:
    """Modified Gram-Schmidt sweep over nearly orthonormal columns."""
    for j in range(R.shape[1]):
        v = R[:, j]
        for _ in range(2):
            for i in range(j):
                v -= (R[:, i] @ v) * R[:, i]
        v /= np.linalg.norm(v)


def border_system(A_red: np.ndarray, col: np.ndarray, row: np.ndarray,
                  corner) -> np.ndarray:
    """Assemble the (m+r) x (m+r) block matrix [[A_red, col], [row, corner]].

    Written for a general border width r, although the indicator only ever
    appends a single auxiliary direction (r = 1).  m = 0 collapses to the
    corner block.
    """
    A_red = np.asarray(A_red, dtype=np.float64)
    if A_red.ndim != 2 or A_red.shape[0] != A_red.shape[1]:
        raise ValueError(f"reduced block must be square, got {A_red.shape}")
    m = A_red.shape[0]
    corner = np.atleast_2d(np.asarray(corner, dtype=np.float64))
    r = corner.shape[0]
    if corner.shape != (r, r):
        raise ValueError(f"corner block must be square, got {corner.shape}")
    col = np.asarray(col, dtype=np.float64).reshape(m, r)
    row = np.asarray(row, dtype=np.float64).reshape(r, m)
    if m == 0:
        return corner.copy()
    return np.block([[A_red, col], [row, corner]])
