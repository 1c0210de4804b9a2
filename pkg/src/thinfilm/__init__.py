"""Positivity-preserving, energy-stable solvers for a thin-film gradient flow.

The model evolves a strictly positive film height on a periodic staggered
grid by an H^-1 gradient flow of the energy

    F(phi) = integral of (1/3) phi^-8 - (4/3) phi^-2 + (eps^2/2) |grad phi|^2.

Two implicit steppers are provided: a first-order convex-splitting scheme
and a second-order stabilized BDF2 scheme.  Both keep the solution positive
and dissipate a (modified) energy for any time step, and both reduce each
step to a convex minimization solved by a preconditioned steepest descent
with a positivity-respecting line search.
"""

from .energy import (
    PhysParams,
    a0_star,
    check_positive,
    discrete_energy,
    modified_energy,
    mu_bdf2,
    mu_exact,
    mu_first_order,
    potential_curvature,
    splitting_first_order,
    splitting_stabilized,
)
from .errors import (
    BarrierCollapseError,
    ConfigError,
    FormatError,
    GridTooLargeError,
    InsufficientDataError,
    InvalidCoefficientsError,
    MaxItersExceededError,
    MissingHistoryError,
    NonPositiveFieldError,
    NonPositiveValueError,
    NonZeroMeanError,
    PositivityLostError,
    SolverDivergedError,
    ThinFilmError,
    UnfinishedError,
)
from .experiments import (
    DEFAULT_SCHEDULE,
    DEFAULT_SNAPSHOT_TIMES,
    CoarseningConfig,
    CoarseningRun,
    ConvergenceTable,
    ManufacturedSolution,
    fit_power_law,
    forcing_term,
    random_initial_data,
    run_coarsening,
    run_convergence_bdf2,
    run_convergence_first_order,
)
from .grid import (
    Grid,
    cell_average,
    div,
    face_average,
    grad,
    grad_norm_2,
    inner,
    inner_face,
    lap,
    mean,
    norm_h1,
    norm_inf,
    norm_p,
    norm_2,
)
from .io import (
    EnergyRecord,
    format_float,
    load_config,
    read_energy_log,
    read_field_snapshot,
    write_energy_log,
    write_field_snapshot,
)
from .psd import PsdTrace, SolverConfig, barrier_alpha, line_search, psd_solve
from .schemes import (
    Bdf2Scheme,
    FirstOrderScheme,
    StepReport,
    StepState,
    ghost_init,
    initial_state,
    restart_state,
)
from .selftest import run_selftest
from .spectral import SpectralSolver, dense_neg_lap_matrix, dense_preconditioner_matrix

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "grad",
    "div",
    "lap",
    "face_average",
    "cell_average",
    "inner",
    "inner_face",
    "mean",
    "norm_p",
    "norm_2",
    "norm_inf",
    "norm_h1",
    "grad_norm_2",
    "SpectralSolver",
    "dense_neg_lap_matrix",
    "dense_preconditioner_matrix",
    "PhysParams",
    "a0_star",
    "check_positive",
    "potential_curvature",
    "discrete_energy",
    "splitting_first_order",
    "splitting_stabilized",
    "modified_energy",
    "mu_exact",
    "mu_first_order",
    "mu_bdf2",
    "SolverConfig",
    "PsdTrace",
    "barrier_alpha",
    "line_search",
    "psd_solve",
    "FirstOrderScheme",
    "Bdf2Scheme",
    "StepState",
    "StepReport",
    "initial_state",
    "restart_state",
    "ghost_init",
    "ManufacturedSolution",
    "forcing_term",
    "ConvergenceTable",
    "run_convergence_first_order",
    "run_convergence_bdf2",
    "random_initial_data",
    "fit_power_law",
    "CoarseningConfig",
    "CoarseningRun",
    "run_coarsening",
    "DEFAULT_SCHEDULE",
    "DEFAULT_SNAPSHOT_TIMES",
    "EnergyRecord",
    "format_float",
    "write_field_snapshot",
    "read_field_snapshot",
    "write_energy_log",
    "read_energy_log",
    "load_config",
    "run_selftest",
    "ThinFilmError",
    "NonZeroMeanError",
    "InvalidCoefficientsError",
    "GridTooLargeError",
    "NonPositiveFieldError",
    "MissingHistoryError",
    "PositivityLostError",
    "SolverDivergedError",
    "MaxItersExceededError",
    "BarrierCollapseError",
    "InsufficientDataError",
    "NonPositiveValueError",
    "ConfigError",
    "FormatError",
    "UnfinishedError",
    "__version__",
]
