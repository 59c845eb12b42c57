"""Distributed ADMM with dynamic average tracking for constraint-coupled
convex optimization over peer networks, plus a parallel-ADMM baseline, a
centralized reference oracle, a numerical convergence certificate, and an
electric-vehicle charging benchmark."""

from .baselines import ParallelAdmm, run_parallel
from .certify import build_certificate, check_descent, check_prop1, lyapunov_value
from .engine import AgentState, TrackingAdmm, run
from .network import (ConsensusMatrix, Graph, averaging_matrix, deviation,
                      lazy_weights, metropolis_weights, random_connected_graph,
                      square_weights, validate)
from .pev import PevConfig, generate as generate_pev, preset_desk_scale, preset_paper_scale
from .problem import (ConstraintCoupledProblem, CouplingBlock, LocalObjective,
                      Polyhedron, PrimalDualPair, coupling_residual, eval_cost,
                      lagrangian, load_problem, local_dual_value, save_problem,
                      split_rhs)
from .qp import QpInstance, QpSolution, local_step_instance, solve, solve_centralized
from .trajectory import IterationMetrics, Trajectory

__version__ = "0.1.0"

__all__ = [
    "AgentState", "ConsensusMatrix", "ConstraintCoupledProblem", "CouplingBlock",
    "Graph", "IterationMetrics", "LocalObjective", "ParallelAdmm", "PevConfig",
    "Polyhedron", "PrimalDualPair", "QpInstance", "QpSolution", "TrackingAdmm",
    "Trajectory", "averaging_matrix", "build_certificate", "check_descent",
    "check_prop1", "coupling_residual", "deviation", "eval_cost", "generate_pev",
    "lagrangian", "lazy_weights", "load_problem", "local_dual_value",
    "local_step_instance", "lyapunov_value", "metropolis_weights",
    "preset_desk_scale", "preset_paper_scale", "random_connected_graph", "run",
    "run_parallel", "save_problem", "solve", "solve_centralized", "split_rhs",
    "square_weights", "validate",
]
