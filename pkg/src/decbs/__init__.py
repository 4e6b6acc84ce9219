"""Bounded-suboptimal multi-agent path finding: CBS, ECBS and DECBS with
bypassing and target reasoning, plus brute-force oracles and a benchmark
runner for MovingAI grid maps."""

from .core import (
    Conflict,
    EdgeConstraint,
    GridMap,
    InstanceError,
    MapfInstance,
    MaxLength,
    MinLength,
    Path,
    RunStats,
    StructuralError,
    VertexConstraint,
    flowtime,
    get_first_collision,
    validate_solution,
)
from .high_level import SolverConfig, solve

__all__ = [
    "Conflict",
    "EdgeConstraint",
    "GridMap",
    "InstanceError",
    "MapfInstance",
    "MaxLength",
    "MinLength",
    "Path",
    "RunStats",
    "SolverConfig",
    "StructuralError",
    "VertexConstraint",
    "flowtime",
    "get_first_collision",
    "solve",
    "validate_solution",
]
