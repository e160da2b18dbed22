"""Exact integer min-cost-flow: network model, scaling solver, oracle, verifier."""

from .network import (
    Arc,
    FlowNetwork,
    FlowSolution,
    INFEASIBLE,
    OPTIMAL,
    VerificationReport,
    infeasible_solution,
    to_dimacs,
    verify_solution,
)
from .solver import HAVE_NUMBA, solve_mcf, warmup
from .brute import brute_force_mcf

__all__ = [
    "Arc",
    "FlowNetwork",
    "FlowSolution",
    "INFEASIBLE",
    "OPTIMAL",
    "VerificationReport",
    "infeasible_solution",
    "to_dimacs",
    "verify_solution",
    "HAVE_NUMBA",
    "solve_mcf",
    "warmup",
    "brute_force_mcf",
]
