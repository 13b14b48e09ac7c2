"""Numerical laboratory for Carleman estimates and state observation for the
cubic complex Ginzburg-Landau equation on the unit square / unit disk."""

from .grid import DomainSpec, SpaceTimeGrid, build_grid
from .gloperator import GLCoeffs, derive_coeffs
from .weights import CarlemanParams

__version__ = "0.1.0"

__all__ = [
    "DomainSpec", "SpaceTimeGrid", "build_grid",
    "GLCoeffs", "derive_coeffs", "CarlemanParams",
    "__version__",
]
