"""glvlab: numerical laboratory for the 2-D Ginzburg-Landau system on
polygonal domains.

Compute (near-)critical points of the GL energy under Dirichlet data and
evaluate energy, winding, vortex, and Pohozaev diagnostics, including the
eps-sweep machinery for rate measurements.
"""

from .geometry import Domain, Mesh, build_polygon, triangulate
from .gl_core import (BoundaryData, EnergyReport, Field, boundary_energy,
                      el_residual, energy_gradient, interior_energy)
from .solver import SolverConfig, continuation_sweep, harmonic_init, minimize
from .vortex_profile import ProfileTable, profile_derivative_check, solve_profile, synthesize_vortex
from .diagnostics import (compute_degree, find_zeros, localized_potential,
                          normal_derivative_energy, pohozaev_residual,
                          polar_decompose, sup_deviation)
from .scenarios import (SweepResult, build_boundary_zero_data, build_cone_scenario,
                        build_dipole_data, build_reference_data, run_sweep)

__version__ = "0.1.0"

__all__ = [
    "Domain", "Mesh", "build_polygon", "triangulate",
    "Field", "BoundaryData", "EnergyReport",
    "interior_energy", "boundary_energy", "energy_gradient", "el_residual",
    "SolverConfig", "harmonic_init", "minimize", "continuation_sweep",
    "ProfileTable", "solve_profile", "profile_derivative_check", "synthesize_vortex",
    "compute_degree", "find_zeros", "sup_deviation", "polar_decompose",
    "normal_derivative_energy", "pohozaev_residual", "localized_potential",
    "build_dipole_data", "build_cone_scenario", "build_boundary_zero_data",
    "build_reference_data", "run_sweep", "SweepResult",
]
