"""Numerical laboratory for boundary flux operators on polygonal domains:
finite-element Dirichlet-to-Neumann maps, multiplication commutators, and the
harmonic-analysis functionals used to audit their estimates."""

from . import (
    cli,
    coefficients,
    config,
    dtn,
    experiments,
    extensions,
    fem,
    functionals,
    geometry,
    oracle,
)
from .errors import ChartError, ConfigError, DtnLabError, MeshQualityError, SolverError

__all__ = [
    "geometry",
    "coefficients",
    "fem",
    "dtn",
    "extensions",
    "functionals",
    "oracle",
    "experiments",
    "config",
    "cli",
    "DtnLabError",
    "MeshQualityError",
    "SolverError",
    "ChartError",
    "ConfigError",
]

__version__ = "0.1.0"
