"""Numerical laboratory for a two-carrier plasma fluid model with Maxwell coupling.

Modules: ``dispersion`` (characteristic cubic and its root structure),
``green`` (explicit per-mode solutions of the two linearized subsystems),
``norms`` (whole-space norms via radial quadrature; torus Sobolev norms),
``nonlinear`` (pseudo-spectral torus solver with energy monitoring),
``harness`` (decay experiments and rate fitting), ``cli`` (command line).
"""

from .dispersion import RootTriple, charpoly, root_triple, solve_real_root
from .green import (
    DiffModeState,
    ModeCoefficients,
    SumModeIC,
    coefficient_matrix_comparison,
    diff_mode_evolve,
    diff_mode_matrix,
    sum_mode_coefficients,
    sum_mode_evolve,
    sum_perp_evolve,
)
from .harness import DecayFit, TimeSeries, fit_decay, run_linear_diff_decay, run_linear_sum_decay, run_nonlinear
from .nonlinear import (
    EnergyReport,
    Stepper,
    TorusState,
    energy_report,
    nonlinear_terms,
    step,
    well_prepared_state,
)
from .norms import RadialProfile, TorusGrid, radial_l2_norm, torus_sobolev_norm

__version__ = "0.1.0"

__all__ = [
    "RootTriple", "charpoly", "root_triple", "solve_real_root",
    "SumModeIC", "ModeCoefficients", "DiffModeState",
    "sum_mode_coefficients", "sum_mode_evolve", "sum_perp_evolve",
    "coefficient_matrix_comparison", "diff_mode_matrix", "diff_mode_evolve",
    "RadialProfile", "TorusGrid", "radial_l2_norm", "torus_sobolev_norm",
    "TorusState", "Stepper", "EnergyReport",
    "nonlinear_terms", "step", "energy_report", "well_prepared_state",
    "TimeSeries", "DecayFit", "fit_decay",
    "run_linear_sum_decay", "run_linear_diff_decay", "run_nonlinear",
    "__version__",
]
