"""POD bases from snapshots and the reduced-order model built on them.

Mode counts always follow the energy rule: the basis keeps the smallest m
whose leading singular values sum past the fraction gamma of the total.
Updates re-decompose the new window's modes concatenated with the current
basis, so previously resolved directions are never thrown away.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fem import OperatorSet
from .linalg import solve_dense, thin_svd
from .problems import ProblemSpec


class EmptyBasisError(RuntimeError):
    """Snapshot data had no usable content (numerically zero)."""


@dataclass
class SnapshotSet:
    """Snapshot columns and the times they were taken at."""

    columns: np.ndarray
    times: np.ndarray


@dataclass
class PodBasis:
    """Euclidean-orthonormal reduced basis, one mode per column."""

    modes: np.ndarray

    @property
    def m(self) -> int:
        return self.modes.shape[1]


def _columns(U) -> np.ndarray:
    cols = U.columns if isinstance(U, SnapshotSet) else U
    return np.asarray(cols, dtype=np.float64)


def select_mode_count(sigma: np.ndarray, gamma: float) -> int:
    """Smallest m with sigma_1 + ... + sigma_m strictly above gamma times the total."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"energy fraction must lie in (0, 1), got {gamma}")
    if sigma.size == 0:
        raise EmptyBasisError("no singular values to select from")
    cum = np.cumsum(sigma)
    return int(np.argmax(cum > gamma * cum[-1])) + 1


def pod_mode(U, gamma: float) -> PodBasis:
    """Extract the POD basis of a snapshot set at energy fraction gamma.

    Parameters
    ----------
    U : SnapshotSet or ndarray, shape (n, s)
    gamma : float in (0, 1)

    Raises
    ------
    EmptyBasisError
        When the snapshots are numerically zero.
    """
    svd = thin_svd(_columns(U))
    if svd.rank == 0:
        raise EmptyBasisError("snapshot set is numerically zero")
    m = select_mode_count(svd.singular_values, gamma)
    return PodBasis(modes=svd.left_vectors[:, :m].copy())


def update_pod_mode(W1, gamma2: float, gamma3: float, old: PodBasis) -> PodBasis:
    """Fold a window of fresh snapshots into an existing basis.

    First reduces the window W1 on its own at fraction gamma2, then
    re-decomposes those modes side by side with the current basis and
    keeps the smallest set passing gamma3.  With gamma3 close to 1 the
    old span survives and genuinely new directions extend it.
    """
    svd1 = thin_svd(_columns(W1))
    if svd1.rank == 0:
        raise EmptyBasisError("update window produced no usable snapshots")
    m1 = select_mode_count(svd1.singular_values, gamma2)
    W2 = np.hstack([svd1.left_vectors[:, :m1], old.modes])
    svd2 = thin_svd(W2)
    if svd2.rank == 0:
        raise EmptyBasisError("combined snapshot matrix is numerically zero")
    m = select_mode_count(svd2.singular_values, gamma3)
    return PodBasis(modes=svd2.left_vectors[:, :m].copy())


@dataclass
class ReducedOperators:
    """Galerkin projections R^T M R and R^T b of the assembled operators."""

    mass: np.ndarray
    stiffness: np.ndarray
    advect_base: Optional[np.ndarray] = None
    advect_mod: Optional[np.ndarray] = None
    reaction: Optional[np.ndarray] = None
    load_base: Optional[np.ndarray] = None
    load_mod: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.mass.shape[0]


def project_operators(ops: OperatorSet, basis: PodBasis) -> ReducedOperators:
    """Project every assembled operator and load onto the basis."""
    R = basis.modes

    def proj(M):
        return None if M is None else R.T @ (M @ R)

    def proj_vec(v):
        return None if v is None else R.T @ v

    return ReducedOperators(mass=proj(ops.mass),
                            stiffness=proj(ops.stiffness),
                            advect_base=proj(ops.advect_base),
                            advect_mod=proj(ops.advect_mod),
                            reaction=proj(ops.reaction),
                            load_base=proj_vec(ops.load_base),
                            load_mod=proj_vec(ops.load_mod))


def reduced_system_at(red: ReducedOperators, k: int, dt: float, eps: float,
                      problem: ProblemSpec, ops: OperatorSet = None,
                      basis: PodBasis = None):
    """Reduced step matrix and load at time index k.

    Separable problems compose the projected factors; otherwise the fine
    advection and load are assembled at t_k and projected, which needs
    ops and basis.
    """
    if k < 0:
        raise ValueError(f"time index must be non-negative, got {k}")
    t = k * dt
    A = red.mass + (dt * eps) * red.stiffness
    if red.reaction is not None:
        A = A + dt * red.reaction
    if problem.separable:
        if red.advect_base is not None:
            A = A + dt * red.advect_base
        if red.advect_mod is not None:
            A = A + (dt * float(problem.velocity_time(t))) * red.advect_mod
        b = np.zeros(red.m)
        if red.load_base is not None:
            b = b + red.load_base
        if red.load_mod is not None:
            b = b + float(problem.source_time(t)) * red.load_mod
        b = dt * b
    else:
        if ops is None or basis is None:
            raise ValueError("non-separable problems need ops and basis to "
                             "rebuild the time-dependent terms")
        ctx = ops.ctx
        R = basis.modes
        if problem.velocity is not None:
            G = ctx.matrix(ctx.advection_data(problem.velocity, t))
            A = A + dt * (R.T @ (G @ R))
        b = dt * (R.T @ ctx.load_vector(problem.source, t))
    return A, b


def pod_step(red: ReducedOperators, k: int, dt: float, eps: float,
             problem: ProblemSpec, alpha_prev: np.ndarray,
             ops: OperatorSet = None, basis: PodBasis = None) -> np.ndarray:
    """One implicit Euler step in the reduced space."""
    A, b = reduced_system_at(red, k, dt, eps, problem, ops=ops, basis=basis)
    return solve_dense(A, b + red.mass @ alpha_prev)


def export_basis(basis: PodBasis, path) -> None:
    """Text dump of the basis: a "n m" header, then the matrix entries
    column-major (mode by mode), one value per line."""
    R = basis.modes
    with open(path, "w") as fh:
        fh.write(f"{R.shape[0]} {R.shape[1]}\n")
        for j in range(R.shape[1]):
            for v in R[:, j]:
                fh.write(f"{v:.17g}\n")
