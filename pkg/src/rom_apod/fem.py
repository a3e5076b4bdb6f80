"""P1 finite elements and implicit Euler stepping on periodic meshes.

The time-invariant pieces (mass, stiffness, the separable advection and
load factors, reaction) are assembled once per mesh; every matrix shares
one sparsity pattern, so composing the step matrix

    A^k = C + dt * (eps K + G(t_k) + Mc)

is plain arithmetic on the value arrays.  Variable coefficients are
integrated with the 4-point degree-2 tetrahedral rule, which is exact for
the products of P1 functions that appear.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .linalg import solve_sparse
from .mesh import Mesh, tet_volumes
from .problems import ProblemSpec

# degree-2 tetrahedral quadrature: 4 points, equal weights
_QA = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
_QB = (5.0 - np.sqrt(5.0)) / 20.0
_QW = 0.25
# barycentric coordinates of the quadrature points = P1 basis values there
_LAMBDA = np.full((4, 4), _QB) + (_QA - _QB) * np.eye(4)
_MASS_LOCAL = (np.ones((4, 4)) + np.eye(4)) / 20.0


class AssemblyContext:
    """Geometry tables and the shared sparsity pattern of one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.num_dofs = mesh.num_dofs
        coords = mesh.element_coords
        self.dofs = mesh.elements

        edges = coords[:, 1:, :] - coords[:, :1, :]
        self.volumes = tet_volumes(coords)
        if np.any(self.volumes <= 0.0):
            raise ValueError("mesh contains non-positively oriented elements")
        # rows of D^{-1} are the gradients of the barycentric coordinates
        Dinv = np.linalg.inv(edges.transpose(0, 2, 1))
        grads = np.empty((coords.shape[0], 4, 3))
        grads[:, 1:, :] = Dinv
        grads[:, 0, :] = -Dinv.sum(axis=1)
        self.grads = grads
        self.qpoints = np.einsum("qi,eid->eqd", _LAMBDA, coords)

        rows = np.repeat(self.dofs, 4, axis=1).ravel()
        cols = np.tile(self.dofs, (1, 4)).ravel()
        n = self.num_dofs
        pattern = sp.coo_matrix((np.ones_like(rows, dtype=np.float64), (rows, cols)),
                                shape=(n, n)).tocsr()
        pattern.sort_indices()
        self.indptr = pattern.indptr
        self.indices = pattern.indices
        self.nnz = pattern.nnz
        key = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr)) * n \
            + self.indices.astype(np.int64)
        self.entry_pos = np.searchsorted(key, rows.astype(np.int64) * n + cols.astype(np.int64))

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        M = sp.csr_matrix((data, self.indices, self.indptr),
                          shape=(self.num_dofs, self.num_dofs), copy=False)
        M.has_sorted_indices = True
        return M

    def scatter(self, local: np.ndarray) -> np.ndarray:
        """Accumulate (n_el, 4, 4) local matrices into a shared-pattern value array."""
        return np.bincount(self.entry_pos, weights=local.ravel(), minlength=self.nnz)

    def mass_data(self) -> np.ndarray:
        return self.scatter(self.volumes[:, None, None] * _MASS_LOCAL)

    def stiffness_data(self) -> np.ndarray:
        local = np.einsum("eid,ejd->eij", self.grads, self.grads)
        return self.scatter(local * self.volumes[:, None, None])

    def advection_data(self, velocity, t=None) -> np.ndarray:
        """(B . grad phi_j, phi_i) for a stationary field or a field at time t."""
        xq, yq, zq = self.qpoints[..., 0], self.qpoints[..., 1], self.qpoints[..., 2]
        Bq = velocity(xq, yq, zq) if t is None else velocity(xq, yq, zq, t)
        Bg = np.einsum("eqd,ejd->eqj", np.asarray(Bq, dtype=np.float64), self.grads)
        local = np.einsum("qi,eqj->eij", _QW * _LAMBDA, Bg)
        return self.scatter(local * self.volumes[:, None, None])

    def reaction_data(self, coefficient) -> np.ndarray:
        xq, yq, zq = self.qpoints[..., 0], self.qpoints[..., 1], self.qpoints[..., 2]
        cq = np.broadcast_to(np.asarray(coefficient(xq, yq, zq), dtype=np.float64),
                             xq.shape)
        local = np.einsum("eq,qi,qj->eij", _QW * cq, _LAMBDA, _LAMBDA)
        return self.scatter(local * self.volumes[:, None, None])

    def load_vector(self, source, t=None) -> np.ndarray:
        """(f, phi_i) for a stationary field or a field at time t."""
        xq, yq, zq = self.qpoints[..., 0], self.qpoints[..., 1], self.qpoints[..., 2]
        fq = source(xq, yq, zq) if t is None else source(xq, yq, zq, t)
        fq = np.broadcast_to(np.asarray(fq, dtype=np.float64), xq.shape)
        local = np.einsum("eq,qi->ei", _QW * fq, _LAMBDA) * self.volumes[:, None]
        return np.bincount(self.dofs.ravel(), weights=local.ravel(),
                           minlength=self.num_dofs)


@dataclass
class OperatorSet:
    """Assembled time-invariant operators of one problem on one mesh.

    For separable problems G1/G2 and b1/b2 hold the advection and load
    factors; otherwise they stay None and `system_at` integrates the
    time-dependent coefficients on the fly.
    """

    ctx: AssemblyContext
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    advect_base: Optional[sp.csr_matrix] = None
    advect_mod: Optional[sp.csr_matrix] = None
    reaction: Optional[sp.csr_matrix] = None
    load_base: Optional[np.ndarray] = None
    load_mod: Optional[np.ndarray] = None

    @property
    def num_dofs(self) -> int:
        return self.ctx.num_dofs


def assemble_invariant(mesh: Mesh, problem: ProblemSpec) -> OperatorSet:
    """Assemble mass, stiffness and every separable factor the problem offers."""
    ctx = AssemblyContext(mesh)
    ops = OperatorSet(ctx=ctx,
                      mass=ctx.matrix(ctx.mass_data()),
                      stiffness=ctx.matrix(ctx.stiffness_data()))
    if problem.reaction is not None:
        ops.reaction = ctx.matrix(ctx.reaction_data(problem.reaction))
    if problem.separable:
        if problem.velocity_base is not None:
            ops.advect_base = ctx.matrix(ctx.advection_data(problem.velocity_base))
        if problem.velocity_mod is not None:
            ops.advect_mod = ctx.matrix(ctx.advection_data(problem.velocity_mod))
        if problem.source_base is not None:
            ops.load_base = ctx.load_vector(problem.source_base)
        if problem.source_mod is not None:
            ops.load_mod = ctx.load_vector(problem.source_mod)
    return ops


def system_at(ops: OperatorSet, k: int, dt: float, eps: float,
              problem: ProblemSpec):
    """Step matrix and load at time index k.

    Returns (A, b) with A = C + dt (eps K + G(t_k) + Mc) and
    b = dt (f(t_k), phi); t_k = k dt.
    """
    if k < 0:
        raise ValueError(f"time index must be non-negative, got {k}")
    if dt < 0.0:
        raise ValueError(f"time step must be non-negative, got {dt}")
    t = k * dt
    ctx = ops.ctx

    data = ops.mass.data + (dt * eps) * ops.stiffness.data
    if ops.reaction is not None:
        data = data + dt * ops.reaction.data
    if problem.separable:
        if ops.advect_base is not None:
            data = data + dt * ops.advect_base.data
        if ops.advect_mod is not None:
            data = data + (dt * float(problem.velocity_time(t))) * ops.advect_mod.data
        b = np.zeros(ctx.num_dofs)
        if ops.load_base is not None:
            b = b + ops.load_base
        if ops.load_mod is not None:
            b = b + float(problem.source_time(t)) * ops.load_mod
        b = dt * b
    else:
        if problem.velocity is not None:
            data = data + dt * ctx.advection_data(problem.velocity, t)
        b = dt * ctx.load_vector(problem.source, t)
    return ctx.matrix(data), b


def fem_step(A, C, u_prev: np.ndarray, b: np.ndarray,
             rel_tol: float = 1e-10) -> np.ndarray:
    """One implicit Euler step: solve A u = b + C u_prev.

    The previous state doubles as the warm start for the Krylov solve.
    """
    return solve_sparse(A, b + C @ u_prev, rel_tol, x0=u_prev)


@dataclass
class FullState:
    """One trajectory entry: index k, time t = k dt, nodal values u."""

    k: int
    t: float
    u: np.ndarray


@dataclass
class Trajectory:
    """Dense record of a run, one state per time index."""

    times: np.ndarray
    states: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.states.shape[0] - 1

    def state(self, k: int) -> FullState:
        return FullState(k=k, t=float(self.times[k]), u=self.states[k])


@dataclass
class FemRun:
    trajectory: Trajectory
    snapshots: np.ndarray
    snapshot_times: np.ndarray
    ops: OperatorSet


def march(ops: OperatorSet, problem: ProblemSpec, dt: float, eps: float,
          k0: int, n_steps: int, u0: np.ndarray,
          rel_tol: float = 1e-10) -> np.ndarray:
    """Advance n_steps implicit Euler steps from state u0 at index k0.

    Returns the (n_steps + 1, num_dofs) array of states including u0.
    """
    states = np.empty((n_steps + 1, ops.num_dofs))
    states[0] = u0
    u = u0
    for i in range(1, n_steps + 1):
        A, b = system_at(ops, k0 + i, dt, eps, problem)
        u = fem_step(A, ops.mass, u, b, rel_tol)
        states[i] = u
    return states


def steps_of(T: float, dt: float, what: str = "horizon") -> int:
    """T expressed in whole steps of dt; rejects non-multiples."""
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = int(round(T / dt))
    if n < 0 or abs(n * dt - T) > 1e-9 * max(abs(T), dt):
        raise ValueError(f"{what} {T} is not a non-negative multiple of dt={dt}")
    return n


def run_fem(mesh: Mesh, problem: ProblemSpec, dt: float, T: float,
            rel_tol: float = 1e-10, snapshot_stride: int = 1) -> FemRun:
    """Full-order implicit Euler run on [0, T] from the nodal initial value.

    Snapshots are the states at indices divisible by snapshot_stride,
    always including the initial one.
    """
    if snapshot_stride < 1:
        raise ValueError(f"snapshot stride must be >= 1, got {snapshot_stride}")
    n_steps = steps_of(T, dt)
    ops = assemble_invariant(mesh, problem)
    v = mesh.vertices
    u0 = np.asarray(problem.initial(v[:, 0], v[:, 1], v[:, 2]), dtype=np.float64)
    u0 = np.broadcast_to(u0, (mesh.num_dofs,)).copy()

    states = march(ops, problem, dt, problem.epsilon, 0, n_steps, u0, rel_tol)
    times = np.arange(n_steps + 1) * dt
    snap_idx = np.arange(0, n_steps + 1, snapshot_stride)
    return FemRun(trajectory=Trajectory(times=times, states=states),
                  snapshots=states[snap_idx].T.copy(),
                  snapshot_times=times[snap_idx],
                  ops=ops)
