"""Decay laboratory for linearized and small-amplitude Euler-Maxwell dynamics."""

from .system import (
    EulerMaxwellParams,
    HyperbolicSystem,
    build_euler_maxwell,
    check_structure,
    constraint_subspace,
    green_matrix,
    load_system,
    restricted_spectrum,
    symbol,
)

__version__ = "0.1.0"

__all__ = [
    "EulerMaxwellParams",
    "HyperbolicSystem",
    "build_euler_maxwell",
    "check_structure",
    "constraint_subspace",
    "green_matrix",
    "load_system",
    "restricted_spectrum",
    "symbol",
]
