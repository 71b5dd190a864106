"""Shifted-Laplacian twogrid preconditioning for the 2D Helmholtz equation.

Modules
-------
grid_fem     Q_p elements on the unit square, semi matrix-free operators.
krylov       Flexible GMRES with right preconditioning.
twogrid      V(nu, nu) twogrid cycle with damped Jacobi and a direct coarse solve.
lfa          Local Fourier analysis of the Q1 twogrid method.
shift_model  Sampling, fitting and evaluating the shift exponent map.
bench        Heterogeneous benchmark scenarios and reports.
"""

from .errors import HelmshiftError
from .grid_fem import (
    GridLevel,
    HelmholtzOperator,
    ShiftSpec,
    WavenumberField,
    apply_mass,
    apply_stiffness,
    apply_system,
    assemble_boundary,
    assemble_rhs,
    build_hierarchy,
    source_gaussian,
)
from .krylov import KrylovReport, average_rate, fgmres
from .twogrid import CycleConfig, TwoGrid, jacobi_smooth, v_cycle
from .lfa import LfaConfig, rho_loc, rho_surface, sigma_c
from .shift_model import (
    FitConfig,
    SampleRecord,
    ShiftMapCoefficients,
    bundled_coefficients,
    fit,
    generate_dataset,
    generate_sample,
    golden_section,
    regression_loss,
    sigma_map,
)
from .bench import ScenarioConfig, SolveReport, emit_report, load_velocity_raster, run_scenario, wedge_profile

__version__ = "0.1.0"
