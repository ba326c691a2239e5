"""Producer retrofit design for existing district heating networks.

Multi-period steady-state thermo-hydraulic network model, techno-economic
cost model, adjoint gradients and an augmented Lagrangian optimizer for
capacities, valve settings, producer inflows and supply temperatures.
"""

from .economics import discount_factor, total_objective
from .errors import DHRetroError, InputError, OutOfValidityRange, SolverError
from .forward import prepare_periods, solve_all_periods, solve_period
from .io import desk_case, load_network, load_periods, load_scenario
from .network import DesignVector, NetworkGraph, Scenario, build_graph, pack_design, unpack_design
from .optimizer.auglag import optimize, sweep
from .periods import PeriodEnvironment, PeriodSet

__version__ = "0.1.0"

__all__ = [
    "DHRetroError", "DesignVector", "InputError", "NetworkGraph", "OutOfValidityRange", "PeriodEnvironment",
    "PeriodSet", "Scenario", "SolverError", "build_graph", "desk_case", "discount_factor", "load_network",
    "load_periods", "load_scenario", "optimize", "pack_design", "prepare_periods", "solve_all_periods",
    "solve_period", "sweep", "total_objective", "unpack_design",
]
