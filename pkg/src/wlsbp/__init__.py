"""Distributed weighted least squares over measurement networks.

Two message-passing solvers (distributed WLS and Gaussian belief
propagation), a centralized oracle, and tooling to compare them.
"""
from .analysis import equivalence_audit, error_trace, rate_envelope
from .assembly import InformationSystem, StackedSystem, assemble_information, assemble_stacked
from .dwls import dwls_init, dwls_round, dwls_run
from .gbp import gbp_init, gbp_round, gbp_run
from .graph import (GraphError, MeasurementGraph, diameter, eccentricities, is_acyclic,
                    is_connected, neighbors)
from .oracle import (comparison_matrix, dominance_certificate, rate_bound, solve_global,
                     stacked_least_squares)
from .scenario import ScenarioSpec, generate, load_scenario, save_scenario
from .trace import IterationBreakdown, RunTrace

__all__ = [
    "GraphError", "InformationSystem", "IterationBreakdown", "MeasurementGraph", "RunTrace",
    "ScenarioSpec", "StackedSystem", "assemble_information", "assemble_stacked",
    "comparison_matrix", "diameter", "dominance_certificate", "dwls_init", "dwls_round",
    "dwls_run", "eccentricities", "equivalence_audit", "error_trace", "gbp_init", "gbp_round",
    "gbp_run", "generate", "is_acyclic", "is_connected", "load_scenario", "neighbors",
    "rate_bound", "rate_envelope", "save_scenario", "solve_global", "stacked_least_squares",
]
