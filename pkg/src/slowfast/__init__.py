"""Numerical analysis of fast-slow ODE systems.

Critical manifolds and their folds and Hopf points, periodic orbits of the fast
subsystem with averaged slow drift, and classification of boundary points of a
candidate compact set as slow exit or entrance points.
"""

from .expr import eval_dual, evaluate, parse_expression
from .systemfile import SystemFile, load_system, parse_system_file
from .system import FastSlowSystem

__version__ = "0.1.0"

__all__ = [
    "FastSlowSystem",
    "SystemFile",
    "eval_dual",
    "evaluate",
    "load_system",
    "parse_expression",
    "parse_system_file",
]
