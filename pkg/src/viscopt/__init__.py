"""2D viscothermal acoustics and level-set topology optimization of absorbers.

Sequential (SLNS) viscothermal solver with a full linearized
Navier-Stokes (FLNS) verification model, adjoint-based topological
sensitivities and a reaction-diffusion level-set design loop.
"""

from .adjoint import full_delta_j, td_fd_harness, topological_derivative
from .config import RunConfig, load_config, parse_config
from .distance import build_size_field, default_alpha_e, solve_distance_field
from .flns import compute_dissipation, energy_balance, flns_s_params, solve_flns
from .levelset import (LevelSetField, OptConfig, OptimizationResult,
                       default_opt_config, init_levelset, run_optimization)
from .mesh import (CaseGeometry, TriMesh, build_case_geometry,
                   conform_to_levelset, extract_air_submesh, refine_mesh)
from .physics import (AirProperties, FictitiousRigid, FrequencyGrid,
                      Wavenumbers, compute_wavenumbers, grid_from_hz)
from .slns import (ForwardSolution, ObjectiveReport, compute_alpha,
                   compute_s_params, frequency_sweep, solve_forward)

__version__ = "0.1.0"

__all__ = [
    "AirProperties", "CaseGeometry", "FictitiousRigid", "ForwardSolution",
    "FrequencyGrid", "LevelSetField", "ObjectiveReport", "OptConfig",
    "OptimizationResult", "RunConfig", "TriMesh", "Wavenumbers",
    "build_case_geometry", "build_size_field", "compute_alpha",
    "compute_dissipation", "compute_s_params", "compute_wavenumbers",
    "conform_to_levelset", "default_alpha_e", "default_opt_config",
    "energy_balance", "extract_air_submesh", "flns_s_params", "frequency_sweep",
    "full_delta_j", "grid_from_hz", "init_levelset", "load_config",
    "parse_config", "refine_mesh", "run_optimization", "solve_distance_field",
    "solve_flns", "solve_forward", "td_fd_harness", "topological_derivative",
]
