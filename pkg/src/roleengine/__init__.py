"""Role engine for collaborative multi-robot path planning.

Pipeline: per-robot-type environment maps (dilation, signed distance
field, skeleton graph), Gaussian-process trajectory optimization,
qualification-based optimal role assignment, and decentralized
role-playing over a shared channel with conflict fields.
"""

from ._kernels import BACKEND_NAME as kernel_backend
from .assignment import (Assignment, InfeasibleAssignmentError,
                         QualificationMatrix, evaluate_qualifications,
                         gra_solve, nn_assign)
from .emap import EMapGraph, InitialPath, extract_feature_nodes
from .engine import (AbortError, Hyperparams, Modes, NegotiationResult,
                     RunResult, Scenario, role_negotiation, run_central)
from .gp import (GPPriorSpec, ProcessRole, SolverError, SolverParams,
                 solve_lm)
from .grids import (InputError, OccupancyGrid, RobotType,
                    SignedDistanceField, compute_sdf, dilate_for_robot,
                    load_pgm, save_pgm)
from .role_playing import SharedChannel, SimulationTrace, run_simulation
from .scenario_io import ScenarioParseError, load_scenario, load_suite

__version__ = "0.1.0"

__all__ = [
    "Assignment", "InfeasibleAssignmentError", "QualificationMatrix",
    "evaluate_qualifications", "gra_solve", "nn_assign",
    "EMapGraph", "InitialPath", "extract_feature_nodes",
    "AbortError", "Hyperparams", "Modes", "NegotiationResult", "RunResult",
    "Scenario", "role_negotiation", "run_central",
    "GPPriorSpec", "ProcessRole", "SolverError", "SolverParams", "solve_lm",
    "InputError", "OccupancyGrid", "RobotType", "SignedDistanceField",
    "compute_sdf", "dilate_for_robot", "load_pgm", "save_pgm",
    "SharedChannel", "SimulationTrace", "run_simulation",
    "ScenarioParseError", "load_scenario", "load_suite",
    "kernel_backend", "__version__",
]
