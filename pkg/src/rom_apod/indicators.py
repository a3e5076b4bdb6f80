"""Error indicators that decide when the reduced basis needs an update.

The augmented indicator solves the reduced step once more in the basis
extended by one auxiliary direction (a random vector or an interpolated
coarse solution, orthonormalized against the basis) and reports the
relative coefficient change.  Alternatives: the algebraic residual of the
reduced solution in the fine system, and the two-grid comparison against
a coarse-space reduced run.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import border_system, solve_dense
from .pod import PodBasis


class UndefinedIndicatorError(RuntimeError):
    """The indicator's normalization vanished."""


@dataclass
class IndicatorSample:
    """One indicator evaluation: coarse check index, time, value, and
    whether it crossed the threshold; cos_theta records the angle between
    the auxiliary mode and the reference solution when both exist."""

    check_index: int
    t: float
    eta: float
    marked: bool = False
    cos_theta: Optional[float] = None
    aux_degenerate: bool = False


def _modes(basis) -> np.ndarray:
    return basis.modes if isinstance(basis, PodBasis) else np.asarray(basis)


def residual_indicator(A, basis, alpha_k: np.ndarray, alpha_prev: np.ndarray,
                       b: np.ndarray, C) -> float:
    """Relative fine-space residual ||A R a_k - b - C R a_prev|| / ||b + C R a_prev||."""
    R = _modes(basis)
    rhs = b + C @ (R @ alpha_prev)
    denom = np.linalg.norm(rhs)
    if denom == 0.0:
        raise UndefinedIndicatorError("residual indicator undefined: zero right-hand side")
    return float(np.linalg.norm(A @ (R @ alpha_k) - rhs) / denom)


def two_grid_indicator(u_coarse: np.ndarray, u_coarse_pod: np.ndarray) -> float:
    """Relative gap between the coarse solution and its reduced twin."""
    denom = np.linalg.norm(u_coarse)
    if denom == 0.0:
        raise UndefinedIndicatorError("two-grid indicator undefined: zero coarse solution")
    return float(np.linalg.norm(u_coarse - u_coarse_pod) / denom)


def orthonormalize_against(d: np.ndarray, basis, drop_tol: float = 1e-10
                           ) -> Optional[np.ndarray]:
    """Orthonormalize d against the basis columns by modified Gram-Schmidt.

    One re-orthogonalization pass keeps the result orthogonal to working
    precision.  Returns None when d lies in the span up to drop_tol times
    its original norm (the degenerate case).
    """
    R = _modes(basis)
    v = np.asarray(d, dtype=np.float64).copy()
    ref = np.linalg.norm(v)
    if ref == 0.0:
        return None
    for _ in range(2):
        for i in range(R.shape[1]):
            v -= (R[:, i] @ v) * R[:, i]
    nrm = np.linalg.norm(v)
    if nrm < drop_tol * ref:
        return None
    return v / nrm


def augmented_indicator(A, b: np.ndarray, C, A_red: np.ndarray,
                        b_red: np.ndarray, C_red: np.ndarray,
                        alpha_prev: np.ndarray, aux: Optional[np.ndarray],
                        basis, alpha_k: np.ndarray, check_index: int = 0,
                        t: float = 0.0) -> IndicatorSample:
    """Augmented-subspace indicator at one time instant.

    Solves the bordered system that extends the reduced step matrix by
    the auxiliary direction and compares its solution with the accepted
    reduced coefficients; since basis and auxiliary mode together stay
    orthonormal, the comparison is the plain Euclidean distance of the
    zero-padded coefficient vectors.  A degenerate auxiliary mode (None)
    yields eta = 0 with the flag set.

    Parameters
    ----------
    A, b, C : fine step matrix, fine load, fine mass at index k
    A_red, b_red, C_red : their projections onto the current basis
    alpha_prev : reduced coefficients at k - 1
    aux : orthonormalized auxiliary mode(s), or None if degenerate
    basis : PodBasis or ndarray of modes
    alpha_k : accepted reduced coefficients at k
    """
    if aux is None:
        return IndicatorSample(check_index=check_index, t=t, eta=0.0,
                               aux_degenerate=True)
    R = _modes(basis)
    m = R.shape[1]
    D = np.asarray(aux, dtype=np.float64)
    if D.ndim == 1:
        D = D[:, None]

    AD = A @ D
    col = R.T @ AD
    row = (A.T @ D).T @ R
    corner = D.T @ AD
    M = border_system(A_red, col, row, corner)

    rhs = np.concatenate([b_red + C_red @ alpha_prev,
                          D.T @ b + D.T @ (C @ (R @ alpha_prev))])
    tilde = solve_dense(M, rhs)
    denom = np.linalg.norm(tilde)
    if denom == 0.0:
        raise UndefinedIndicatorError("augmented indicator undefined: zero augmented solution")
    eta = np.sqrt(np.sum((tilde[:m] - alpha_k) ** 2) + np.sum(tilde[m:] ** 2)) / denom
    return IndicatorSample(check_index=check_index, t=t, eta=float(eta))


def random_aux_mode(n_dofs: int, seed) -> np.ndarray:
    """Reproducible standard normal auxiliary vector."""
    if n_dofs < 1:
        raise ValueError(f"need at least one degree of freedom, got {n_dofs}")
    return np.random.default_rng(seed).standard_normal(n_dofs)


def coarse_aux_mode(u_coarse: np.ndarray, P, basis,
                    drop_tol: float = 1e-10) -> Optional[np.ndarray]:
    """Interpolate a coarse solution to the fine mesh and orthonormalize
    it against the basis; None when the result is degenerate."""
    return orthonormalize_against(P @ u_coarse, basis, drop_tol)


def cos_angle(d: np.ndarray, u_ref: np.ndarray) -> float:
    """Cosine between a unit auxiliary mode and a reference solution."""
    denom = np.linalg.norm(u_ref)
    if denom == 0.0:
        raise UndefinedIndicatorError("cosine angle undefined for a zero reference")
    return float(d @ u_ref / denom)
