"""Transient stability certificates and synchronverter emergency control
for lossless structure-preserving grid models.

The pipeline: build a Network from a grid description, solve its
equilibrium, certify stability with a quadratic Lyapunov function, design
emergency inertia/damping retuning per line trip, and validate the whole
chain by simulation.
"""

__version__ = "0.1.0"

from .certificate import (Certificate, check_state_in_roa, compute_vmin,
                          find_certificate, load_p_matrix, save_certificate,
                          verify_supplied_p)
from .emergency import (CONTROLLABLE, SAFE, SHED_REQUIRED, Contingency,
                        EmergencyPlan, alternate_heuristic, contingency_scan,
                        default_candidate_grid, delay_window_bound,
                        design_fixed_damping, design_fixed_inertia,
                        enumerate_feasible_candidates, load_plan, procedure_b,
                        procedure_d, save_plan)
from .equilibrium import (Equilibrium, check_sync_condition, sector_gain,
                          solve_equilibrium)
from .exceptions import (CertificateError, DesignError, EquilibriumError,
                         GridModelError, LmiError, SimulationError)
from .network import (Bus, Line, Network, SystemMatrices, assemble_matrices,
                      build_network, load_grid_file)
from .simulate import (Trajectory, integrate, load_trajectory, rhs_fault_on,
                       rhs_full, save_trajectory, simulate_scenario)

__all__ = [
    "Bus", "Line", "Network", "SystemMatrices", "assemble_matrices",
    "build_network", "load_grid_file",
    "Equilibrium", "solve_equilibrium", "check_sync_condition", "sector_gain",
    "Certificate", "find_certificate", "verify_supplied_p", "compute_vmin",
    "check_state_in_roa", "save_certificate", "load_p_matrix",
    "EmergencyPlan", "Contingency", "procedure_b", "procedure_d",
    "design_fixed_inertia", "design_fixed_damping", "alternate_heuristic",
    "default_candidate_grid", "enumerate_feasible_candidates",
    "contingency_scan", "delay_window_bound", "save_plan", "load_plan",
    "SAFE", "CONTROLLABLE", "SHED_REQUIRED",
    "Trajectory", "integrate", "rhs_full", "rhs_fault_on",
    "simulate_scenario", "save_trajectory", "load_trajectory",
    "GridModelError", "EquilibriumError", "LmiError", "CertificateError",
    "DesignError", "SimulationError",
]
