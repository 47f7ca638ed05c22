"""Symmetric vortices of the SO(5) Ginzburg-Landau model.

Computes normal-core and antiferromagnetic-core vortex profiles of the
coupled superconductor/antiferromagnet system at finite Ginzburg-Landau
parameter kappa and in the extreme type-II limit (kappa = inf), traces the
bifurcation branch in the doping parameter g, and validates every exact
identity the solutions must satisfy (Pohozaev, second-variation positivity,
admissibility bounds, decay laws).
"""

from .grid import RadialGrid, build_grid, integrate, apply_radial_laplacian
from .model import (
    INF,
    ModelParams,
    Profile,
    TangentDirection,
    EnergyBreakdown,
    GridMismatch,
    energy,
    residual,
    hessian,
    quotient_form,
    pohozaev_residual,
)
from .solver import (
    Seed,
    SolveOptions,
    NonConvergence,
    StabilityViolation,
    solve,
    solve_normal_core,
    gradient_flow,
    trial_profile,
)
from .spectral import EigenPair, ground_state, threshold_g, threshold_detail, hessian_min_eig
from .continuation import (
    BranchPoint,
    Branch,
    InsufficientPoints,
    SingularSystem,
    trace_branch,
    transition_order,
    bifurcation_direction,
    uniqueness_probe,
)
from .diagnostics import (
    DiagnosticsReport,
    DecayFit,
    DegenerateTail,
    check_admissible,
    decay_fit,
    x_norm,
    h_norm,
    limit_check,
    g_to_zero_scan,
    energy_scaling,
)

__version__ = "0.1.0"
