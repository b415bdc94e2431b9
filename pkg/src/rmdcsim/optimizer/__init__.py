"""Intra-subgraph placement and migration model, exact solver and reference oracle."""
from .build import ModelParams, RmdcSnapshot, VmSnapshot, build_model
from .feasibility import Violation, check_feasible
from .model import (
    EVICTABLE,
    OBJECTIVE_CARBON,
    OBJECTIVE_GRID,
    REGULAR,
    Migration,
    MipModel,
    ModelError,
    ModelVm,
    Schedule,
    evaluate,
    extract_migrations,
)
from .oracle import brute_force_oracle
from .solver import NoSolutionError, SolveLimits, solve

__all__ = [
    "EVICTABLE",
    "OBJECTIVE_CARBON",
    "OBJECTIVE_GRID",
    "REGULAR",
    "Migration",
    "MipModel",
    "ModelError",
    "ModelParams",
    "ModelVm",
    "NoSolutionError",
    "RmdcSnapshot",
    "Schedule",
    "SolveLimits",
    "Violation",
    "VmSnapshot",
    "brute_force_oracle",
    "build_model",
    "check_feasible",
    "evaluate",
    "extract_migrations",
    "solve",
]
