"""Convex subproblems and the interior-point solver that handles them."""

from .program import ConicProgram, ProgramBuilder
from .solver import ConicSolution, Status, solve

__all__ = ["ConicProgram", "ConicSolution", "ProgramBuilder", "Status", "solve"]
