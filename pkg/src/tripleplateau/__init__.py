"""Upper bounds for the relaxed area of triple-junction maps.

The bound is the disk area plus the least total area of three half-plateau
minimal surfaces hung on the sides of the target triangle; this package
computes those surfaces, minimizes over connections, and checks the bound
against an explicit competitor.
"""

__version__ = "0.1.0"

from .errors import (
    Case2NotSupported,
    ConfigError,
    EpsilonTooLarge,
    GeometryError,
    GridMismatch,
    InvalidConnection,
    KnotBudgetTooSmall,
    NonConvergence,
    NotAGraph,
    TriplePlateauError,
)
from .functional import GEvaluation, GEvaluator, GridSpec, SourceJunction, continuity_gap, evaluate, upper_bound
from .geometry import (
    Connection,
    SideFunction,
    TargetTriangle,
    build_side_function,
    connection_length,
    length_bound,
    piecewise_linear_approximate,
    project_to_side,
    validate_connection,
)
from .optimize import OptimizationResult, OptimizationSpec, brute_force_p_grid, minimize, steiner_initial
from .plateau import PlateauProblem, SolverConfig, SurfaceField, area, refine_and_extrapolate, solve
from .verifier import EpsilonGeometry, build_geometry, convergence_study, strip_area, total_area
