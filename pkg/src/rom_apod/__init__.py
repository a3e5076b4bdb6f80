"""Reduced-order models for advection-diffusion on periodic boxes,
with static and adaptively updated POD bases."""

__version__ = "0.1.0"

from .adaptive import (AdaptiveConfig, AdaptiveResult, MethodRow, RunStats,
                       compare_methods, error_series, relative_error,
                       run_adaptive, run_static_pod)
from .config import (ConfigError, ExperimentConfig, format_config,
                     load_config, parse_config, validate_config)
from .experiment import emit_plotdata, run_experiment
from .fem import (FemRun, FullState, OperatorSet, Trajectory,
                  assemble_invariant, fem_step, march, run_fem, steps_of,
                  system_at)
from .indicators import (IndicatorSample, UndefinedIndicatorError,
                         augmented_indicator, coarse_aux_mode, cos_angle,
                         orthonormalize_against, random_aux_mode,
                         residual_indicator, two_grid_indicator)
from .linalg import (SingularMatrixError, SolverFailure, SvdResult,
                     border_system, solve_dense, solve_sparse, thin_svd)
from .mesh import Mesh, build_mesh, dump_mesh, interpolation_matrix, tet_volumes
from .pod import (EmptyBasisError, PodBasis, ReducedOperators, SnapshotSet,
                  export_basis, pod_mode, pod_step, project_operators,
                  reduced_system_at, select_mode_count, update_pod_mode)
from .problems import (ProblemSpec, abc_problem, kolmogorov_problem,
                       manufactured_problem)

__all__ = [name for name in dir() if not name.startswith("_")]
