"""Adaptive reduced-order time stepping with on-the-fly basis updates.

The driver marches the reduced model, evaluates an error indicator at
every coarse time instant, and on a threshold crossing rolls back one
fine step, recomputes a fine window with the full model, folds the window
snapshots into the basis, and resumes.  A static reduced run is the same
loop with the monitoring switched off, which keeps the two bitwise
comparable.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .fem import Trajectory, assemble_invariant, march, run_fem, steps_of, system_at
from .indicators import (IndicatorSample, augmented_indicator, cos_angle,
                         orthonormalize_against, random_aux_mode,
                         residual_indicator, two_grid_indicator)
from .mesh import Mesh, interpolation_matrix
from .pod import (PodBasis, pod_mode, pod_step, project_operators,
                  reduced_system_at, update_pod_mode)
from .problems import ProblemSpec

logger = logging.getLogger(__name__)

INDICATOR_KINDS = ("residual", "two-grid", "aug-random", "aug-coarse")


@dataclass
class AdaptiveConfig:
    """Run parameters shared by the static and adaptive reduced models.

    dt is the fine time step, coarse_dt the indicator checking interval
    (and the coarse model's step), T0 the initial full-order window, dT
    the length of each update window, T the horizon.  gamma1 controls the
    initial basis, gamma2/gamma3 the update; snapshot_stride counts fine
    steps between stored snapshots.
    """

    dt: float = 5e-3
    coarse_dt: float = 0.2
    T0: float = 5.0
    dT: float = 4.0
    T: float = 20.0
    gamma1: float = 0.999
    gamma2: float = 0.999
    gamma3: float = 1.0 - 1e-8
    snapshot_stride: int = 20
    eta0: float = np.inf
    indicator: str = "aug-coarse"
    rel_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma3"):
            g = getattr(self, name)
            if not 0.0 < g < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {g}")
        if self.indicator not in INDICATOR_KINDS:
            raise ValueError(f"unknown indicator '{self.indicator}', "
                             f"expected one of {INDICATOR_KINDS}")
        if not self.T >= self.T0 >= 0.0:
            raise ValueError(f"need 0 <= T0 <= T, got T0={self.T0}, T={self.T}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be a positive integer, "
                             f"got {self.snapshot_stride}")
        if not self.eta0 >= 0.0:
            raise ValueError(f"threshold eta0 must be non-negative, got {self.eta0}")
        if not self.rel_tol > 0.0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        self.schedule()

    def schedule(self):
        """Derived integer step counts; raises when the times do not nest."""
        n_total = steps_of(self.T, self.dt, "horizon T")
        n_warm = steps_of(self.T0, self.dt, "initial window T0")
        n_window = steps_of(self.dT, self.dt, "update window dT")
        w = steps_of(self.coarse_dt, self.dt, "checking interval coarse_dt")
        if n_window < 1:
            raise ValueError("update window dT must cover at least one step")
        if w < 1:
            raise ValueError("coarse_dt must cover at least one fine step")
        if self.indicator == "two-grid":
            # the coarse replica must stay on the coarse lattice
            for value, name in ((self.T0, "T0"), (self.dT, "dT"), (self.T, "T")):
                steps_of(value, self.coarse_dt, f"{name} (two-grid, in coarse steps)")
        return n_total, n_warm, w, n_window


@dataclass
class RunStats:
    """Bookkeeping of one reduced run."""

    update_count: int = 0
    update_times: list = field(default_factory=list)
    mode_history: list = field(default_factory=list)
    average_modes: float = 0.0
    fem_steps: int = 0
    reduced_steps: int = 0
    dofs: int = 0
    timings: dict = field(default_factory=dict)
    error_at_end: Optional[float] = None
    average_error: Optional[float] = None


@dataclass
class AdaptiveResult:
    trajectory: Trajectory
    samples: list
    stats: RunStats
    basis: PodBasis
    rep_dofs: np.ndarray


def relative_error(u_ref: np.ndarray, u: np.ndarray) -> float:
    """||u_ref - u|| / ||u_ref||; undefined for a zero reference."""
    denom = np.linalg.norm(u_ref)
    if denom == 0.0:
        raise ValueError("relative error undefined: reference has zero norm")
    return float(np.linalg.norm(u_ref - u) / denom)


def error_series(reference: Trajectory, trajectory: Trajectory) -> np.ndarray:
    """Per-instant relative error, NaN before the reference first becomes
    nonzero (runs starting from u = 0 have no error defined at t = 0)."""
    if reference.states.shape != trajectory.states.shape:
        raise ValueError("reference and trajectory cover different grids or spans")
    norms = np.linalg.norm(reference.states, axis=1)
    err = np.full(norms.shape, np.nan)
    ok = norms > 0.0
    diff = np.linalg.norm(reference.states[ok] - trajectory.states[ok], axis=1)
    err[ok] = diff / norms[ok]
    return err


def _attach_errors(stats: RunStats, reference: Optional[Trajectory],
                   trajectory: Trajectory) -> None:
    if reference is None:
        return
    err = error_series(reference, trajectory)
    finite = np.isfinite(err)
    if finite.any():
        stats.average_error = float(np.mean(err[finite]))
        stats.error_at_end = float(err[-1]) if np.isfinite(err[-1]) else None


class _TwoGridReplica:
    """Coarse-space reduced model mirroring the fine process.

    It advances one coarse step per check instant and its updates are
    slaved to the fine process's marks, so u_POD on the coarse mesh is
    always available for the two-grid comparison.
    """

    def __init__(self, cfg: AdaptiveConfig, coarse_mesh: Mesh,
                 problem: ProblemSpec, coarse_states: np.ndarray):
        n_total, n_warm, w, n_window = cfg.schedule()
        self.cfg = cfg
        self.problem = problem
        self.ops = assemble_invariant(coarse_mesh, problem)
        self.n_window = n_window // w
        self.l_total = n_total // w
        self.stride = max(1, int(round(cfg.snapshot_stride / w)))
        l_warm = n_warm // w
        snaps = coarse_states[np.arange(0, l_warm + 1, self.stride)].T
        self.basis = pod_mode(snaps, cfg.gamma1)
        self.red = project_operators(self.ops, self.basis)
        self.alpha = self.basis.modes.T @ coarse_states[l_warm]
        self.alpha_prev = self.alpha
        self.l_pos = l_warm

    def advance_to(self, l: int) -> np.ndarray:
        """Step the replica to coarse index l and return its expanded state."""
        assert l == self.l_pos + 1, "replica drifted out of sync with the checks"
        self.alpha_prev = self.alpha
        self.alpha = pod_step(self.red, l, self.cfg.coarse_dt,
                              self.problem.epsilon, self.problem, self.alpha,
                              ops=self.ops, basis=self.basis)
        self.l_pos = l
        return self.basis.modes @ self.alpha

    def update(self, l: int) -> None:
        """Mirror a fine-process mark at check index l: roll back one
        coarse step, recompute a coarse window, fold it into the basis."""
        cfg = self.cfg
        start = self.basis.modes @ self.alpha_prev
        n_win = min(self.n_window, self.l_total - (l - 1))
        states = march(self.ops, self.problem, cfg.coarse_dt,
                       self.problem.epsilon, l - 1, n_win, start, cfg.rel_tol)
        idx = sorted(set(range(self.stride, n_win + 1, self.stride)) | {n_win})
        self.basis = update_pod_mode(states[idx].T, cfg.gamma2, cfg.gamma3,
                                     self.basis)
        self.red = project_operators(self.ops, self.basis)
        self.alpha = self.basis.modes.T @ states[n_win]
        self.alpha_prev = self.alpha
        self.l_pos = l - 1 + n_win


def _drive(cfg: AdaptiveConfig, mesh: Mesh, problem: ProblemSpec,
           coarse_mesh: Optional[Mesh], reference: Optional[Trajectory],
           monitor: bool) -> AdaptiveResult:
    n_total, n_warm, w, n_window = cfg.schedule()
    kind = cfg.indicator
    eps = problem.epsilon
    timings = {"assembly": 0.0, "coarse": 0.0, "fem_window": 0.0,
               "reduced": 0.0, "estimate": 0.0, "update": 0.0}

    # coarse-space companion data
    u_interp = None
    coarse_traj = None
    replica = None
    if monitor and kind in ("two-grid", "aug-coarse"):
        if coarse_mesh is None:
            raise ValueError(f"indicator '{kind}' needs a coarse mesh")
        tic = time.perf_counter()
        l_total = n_total // w
        coarse_run = run_fem(coarse_mesh, problem, cfg.coarse_dt,
                             l_total * cfg.coarse_dt, cfg.rel_tol)
        coarse_traj = coarse_run.trajectory
        if kind == "aug-coarse":
            P = interpolation_matrix(coarse_mesh, mesh)
            u_interp = P @ coarse_traj.states.T
        else:
            replica = _TwoGridReplica(cfg, coarse_mesh, problem,
                                      coarse_traj.states)
        timings["coarse"] = time.perf_counter() - tic

    tic = time.perf_counter()
    ops = assemble_invariant(mesh, problem)
    timings["assembly"] = time.perf_counter() - tic

    v = mesh.vertices
    u0 = np.asarray(problem.initial(v[:, 0], v[:, 1], v[:, 2]), dtype=np.float64)
    u0 = np.broadcast_to(u0, (mesh.num_dofs,)).copy()

    tic = time.perf_counter()
    warm = march(ops, problem, cfg.dt, eps, 0, n_warm, u0, cfg.rel_tol)
    timings["fem_window"] += time.perf_counter() - tic

    stats = RunStats()
    stats.fem_steps = n_warm

    snaps = warm[np.arange(0, n_warm + 1, cfg.snapshot_stride)].T
    tic = time.perf_counter()
    basis = pod_mode(snaps, cfg.gamma1)
    red = project_operators(ops, basis)
    timings["update"] += time.perf_counter() - tic
    stats.mode_history.append((n_warm, basis.m))

    states = np.empty((n_total + 1, mesh.num_dofs))
    states[:n_warm + 1] = warm
    rep_dofs = np.empty(n_total + 1, dtype=np.int64)
    rep_dofs[:n_warm + 1] = mesh.num_dofs

    alpha = basis.modes.T @ warm[n_warm]
    samples = []
    mode_weight = 0

    k = n_warm
    while k < n_total:
        k += 1
        alpha_prev = alpha
        tic = time.perf_counter()
        alpha = pod_step(red, k, cfg.dt, eps, problem, alpha,
                         ops=ops, basis=basis)
        timings["reduced"] += time.perf_counter() - tic
        stats.reduced_steps += 1
        mode_weight += basis.m
        states[k] = basis.modes @ alpha
        rep_dofs[k] = basis.m

        if not (monitor and k % w == 0):
            continue
        l = k // w
        t = k * cfg.dt

        tic = time.perf_counter()
        if kind == "residual":
            A_k, b_k = system_at(ops, k, cfg.dt, eps, problem)
            eta = residual_indicator(A_k, basis, alpha, alpha_prev, b_k, ops.mass)
            sample = IndicatorSample(check_index=l, t=t, eta=eta)
        elif kind == "two-grid":
            u_pod_coarse = replica.advance_to(l)
            eta = two_grid_indicator(coarse_traj.states[l], u_pod_coarse)
            sample = IndicatorSample(check_index=l, t=t, eta=eta)
        else:
            if kind == "aug-random":
                raw = random_aux_mode(mesh.num_dofs, seed=[cfg.seed, l])
            else:
                raw = u_interp[:, l]
            aux = orthonormalize_against(raw, basis)
            A_k, b_k = system_at(ops, k, cfg.dt, eps, problem)
            A_red, b_red = reduced_system_at(red, k, cfg.dt, eps, problem,
                                             ops=ops, basis=basis)
            sample = augmented_indicator(A_k, b_k, ops.mass, A_red, b_red,
                                         red.mass, alpha_prev, aux, basis,
                                         alpha, check_index=l, t=t)
            if aux is not None and reference is not None:
                sample.cos_theta = cos_angle(aux, reference.states[k])
        timings["estimate"] += time.perf_counter() - tic

        sample.marked = bool(sample.eta > cfg.eta0)
        samples.append(sample)
        if logger.isEnabledFor(logging.DEBUG) and reference is not None:
            gap = np.linalg.norm(reference.states[k] - states[k])
            logger.debug("check l=%d t=%.6g eta=%.6e marked=%s fine_gap=%.6e",
                         l, t, sample.eta, sample.marked, gap)
        if not sample.marked:
            continue

        # threshold crossed: back up one step and recompute a fine window
        k -= 1
        stats.update_times.append(k * cfg.dt)
        n_win = min(n_window, n_total - k)
        tic = time.perf_counter()
        window = march(ops, problem, cfg.dt, eps, k, n_win, states[k],
                       cfg.rel_tol)
        timings["fem_window"] += time.perf_counter() - tic
        stats.fem_steps += n_win
        states[k + 1:k + n_win + 1] = window[1:]
        rep_dofs[k + 1:k + n_win + 1] = mesh.num_dofs

        idx = sorted(set(range(cfg.snapshot_stride, n_win + 1,
                               cfg.snapshot_stride)) | {n_win})
        tic = time.perf_counter()
        basis = update_pod_mode(window[idx].T, cfg.gamma2, cfg.gamma3, basis)
        red = project_operators(ops, basis)
        timings["update"] += time.perf_counter() - tic

        k += n_win
        alpha = basis.modes.T @ states[k]
        stats.mode_history.append((k, basis.m))
        stats.update_count += 1
        if replica is not None:
            replica.update(l)
        logger.info("basis update %d at t=%.6g: m=%d", stats.update_count,
                    stats.update_times[-1], basis.m)

    trajectory = Trajectory(times=np.arange(n_total + 1) * cfg.dt, states=states)
    stats.dofs = basis.m
    stats.average_modes = (mode_weight / stats.reduced_steps
                           if stats.reduced_steps else float(basis.m))
    stats.timings = timings
    _attach_errors(stats, reference, trajectory)
    return AdaptiveResult(trajectory=trajectory, samples=samples, stats=stats,
                          basis=basis, rep_dofs=rep_dofs)


def run_static_pod(cfg: AdaptiveConfig, mesh: Mesh, problem: ProblemSpec,
                   reference: Optional[Trajectory] = None) -> AdaptiveResult:
    """Reduced run with the basis frozen after the initial window."""
    return _drive(cfg, mesh, problem, None, reference, monitor=False)


def run_adaptive(cfg: AdaptiveConfig, mesh: Mesh, problem: ProblemSpec,
                 coarse_mesh: Optional[Mesh] = None,
                 reference: Optional[Trajectory] = None) -> AdaptiveResult:
    """Adaptive reduced run with indicator checks every coarse_dt.

    With eta0 = inf this monitors but never updates and reproduces the
    static run bit for bit.
    """
    return _drive(cfg, mesh, problem, coarse_mesh, reference, monitor=True)


_METHOD_KINDS = {
    "pod": None,
    "residual": "residual",
    "two-grid": "two-grid",
    "aug-random": "aug-random",
    "aug-coarse": "aug-coarse",
}

METHOD_NAMES = ("fem",) + tuple(_METHOD_KINDS)


@dataclass
class MethodRow:
    """One line of the comparison table."""

    method: str
    dofs: int
    update_times: list
    wall_seconds: float
    error_at_end: Optional[float] = None
    average_error: Optional[float] = None
    status: str = "ok"


def compare_methods(methods, cfg: AdaptiveConfig, mesh: Mesh,
                    problem: ProblemSpec, coarse_mesh: Optional[Mesh] = None,
                    with_reference: bool = True,
                    isolate_failures: bool = False):
    """Run each requested method and tabulate final/average errors.

    Returns (rows, results, reference) where results maps the method name
    to its AdaptiveResult (or to the FEM Trajectory for method "fem").
    The reference trajectory is the full-order run; it is computed once
    and shared, and doubles as the "fem" method itself.  With
    isolate_failures a solver breakdown marks the affected row instead of
    raising, and the remaining methods still run.
    """
    from .linalg import SingularMatrixError, SolverFailure  # local to avoid cycle noise
    failure_types = (SolverFailure, SingularMatrixError)

    methods = list(methods)
    unknown = [name for name in methods if name not in METHOD_NAMES]
    if unknown:
        raise ValueError(f"unknown methods {unknown}, expected {METHOD_NAMES}")

    rows, results = [], {}
    reference = None
    fem_wall = None
    fem_run = None
    fem_error = None
    if with_reference or "fem" in methods:
        tic = time.perf_counter()
        try:
            fem_run = run_fem(mesh, problem, cfg.dt, cfg.T, cfg.rel_tol,
                              cfg.snapshot_stride)
        except failure_types as exc:
            if not isolate_failures:
                raise
            fem_error = exc
            logger.warning("reference run failed: %s", exc)
        fem_wall = time.perf_counter() - tic
        if with_reference and fem_run is not None:
            reference = fem_run.trajectory

    for name in methods:
        if name == "fem":
            if fem_run is None:
                rows.append(MethodRow(method="fem", dofs=mesh.num_dofs,
                                      update_times=[], wall_seconds=fem_wall,
                                      status=f"solver_failure: {fem_error}"))
                results[name] = None
            else:
                rows.append(MethodRow(method="fem", dofs=mesh.num_dofs,
                                      update_times=[], wall_seconds=fem_wall))
                results[name] = fem_run.trajectory
            continue
        kind = _METHOD_KINDS[name]
        tic = time.perf_counter()
        try:
            if kind is None:
                res = run_static_pod(cfg, mesh, problem, reference)
            else:
                res = run_adaptive(replace(cfg, indicator=kind), mesh, problem,
                                   coarse_mesh, reference)
        except failure_types as exc:
            if not isolate_failures:
                raise
            logger.warning("method %s failed: %s", name, exc)
            rows.append(MethodRow(method=name, dofs=0, update_times=[],
                                  wall_seconds=time.perf_counter() - tic,
                                  status=f"solver_failure: {exc}"))
            results[name] = None
            continue
        wall = time.perf_counter() - tic
        rows.append(MethodRow(method=name, dofs=res.stats.dofs,
                              update_times=list(res.stats.update_times),
                              wall_seconds=wall,
                              error_at_end=res.stats.error_at_end,
                              average_error=res.stats.average_error))
        results[name] = res
    return rows, results, reference
