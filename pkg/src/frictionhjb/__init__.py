"""Friction-controlled differential inclusions: simulation, free-time value functions and verification."""

from .dynamics import HamiltonianPair, eval_F, eval_Fbar, hamiltonians, osl_check, support_Fbar, velocity_table
from .hjb import (FeedbackLaw, ValueTable, brute_force_value, extract_feedback, follow_feedback, query_value,
                  solve_value)
from .integrator import ControlSignal, Trajectory, gronwall_check, integrate, integrate_batch, step
from .kernels import BACKEND
from .reachability import Feasibility, attainable, in_domain, reach
from .scenario import (Scenario, ScenarioError, StructuralConstants, TargetTube, ValidationError,
                       estimate_constants, load_scenario, loads_scenario)
from .verify import (VerificationReport, check_HJ_pointwise, check_T14, invariance_sample_test, ipc_check,
                     p7_ratio_sweep, proximal_probe, steer_to_target)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ControlSignal", "Feasibility", "FeedbackLaw", "HamiltonianPair", "Scenario", "ScenarioError",
    "StructuralConstants", "TargetTube", "Trajectory", "ValidationError", "ValueTable", "VerificationReport",
    "attainable", "brute_force_value", "check_HJ_pointwise", "check_T14", "estimate_constants", "eval_F",
    "eval_Fbar", "extract_feedback", "follow_feedback", "gronwall_check", "hamiltonians", "in_domain",
    "integrate", "integrate_batch", "invariance_sample_test", "ipc_check", "load_scenario", "loads_scenario",
    "osl_check", "p7_ratio_sweep", "proximal_probe", "query_value", "reach", "solve_value", "steer_to_target",
    "step", "support_Fbar", "velocity_table",
]
