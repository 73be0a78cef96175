"""Grassmann-algebra toolkit for projective foliations and their transverse dimensions."""

__version__ = "0.1.0"

from .exterior import Decomposable, DegenerateError, DimensionMismatch, Field, KVector
from .projective import ExclusionError, FoliationCenter, ProjectedPoint, ProjectivePoint
from .dimension import DimensionEstimate

__all__ = [
    "Decomposable",
    "DegenerateError",
    "DimensionEstimate",
    "DimensionMismatch",
    "ExclusionError",
    "Field",
    "FoliationCenter",
    "KVector",
    "ProjectedPoint",
    "ProjectivePoint",
    "__version__",
]
