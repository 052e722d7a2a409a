"""Finite-difference lab for Hamilton-Jacobi equations on a line with
time-periodic flux-limited junctions (traffic lights) and their
homogenized single-junction limit."""

__version__ = "0.1.0"

from ._accel import backend
from .cell import (EffectiveModel, ErgodicEstimate, corrector_slopes, effective_flux_limiter,
                   effective_hamiltonian, effective_model, ergodic_constant, truncated_corrector)
from .hamiltonian import (QuasiConvexHamiltonian, SlopeQuadruple, SpaceTimeHamiltonian, envelope_minus,
                          envelope_plus, from_descriptor, from_table, junction_function, level_set_endpoints, minimizer,
                          quadratic, trapezoid, vee)
from .homogenization import EpsilonSweep, convergence_report, solve_effective, solve_oscillatory
from .scenario import InitialDatum, JunctionScenario, PhaseSchedule, mean_limiter
from .solver import BoundaryCondition, Grid1D, GridSolution, Trajectory, comparison_check, solve_cauchy, step

__all__ = [name for name in dir() if not name.startswith("_")]
