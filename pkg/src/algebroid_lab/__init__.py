"""Riemannian Lie algebroids: Levi-Civita connections, geodesic flows,
Killing sections and lattice sigma models.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .algebroid import AlgebroidModel, Section, validation_summary
from .dynamics import EPoint, PhasePoint, Trajectory, integrate
from .expr import Expr, parse
from .killing import killing_check, killing_find
from .modelfile import LoadedModel, SchemaError, load_bundled, load_model
from .riemann import MetricModel, christoffel, curvature
from .sigma import SigmaConfiguration, SourceManifold, relax

__all__ = [
    "AlgebroidModel",
    "EPoint",
    "Expr",
    "LoadedModel",
    "MetricModel",
    "PhasePoint",
    "SchemaError",
    "Section",
    "SigmaConfiguration",
    "SourceManifold",
    "Trajectory",
    "christoffel",
    "curvature",
    "integrate",
    "killing_check",
    "killing_find",
    "load_bundled",
    "load_model",
    "parse",
    "relax",
    "validation_summary",
]
