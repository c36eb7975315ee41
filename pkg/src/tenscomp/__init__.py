"""Low-rank tensor completion and ordinary kriging for 3-D property fields."""

from .admm import AdmmParams, ConvergenceTrace, DivergenceError, complete_plain, complete_smoothed
from .kriging import SearchEllipsoid, ordinary_krige
from .tensor import Dims3, fold, frobenius_norm, project, project_complement, rse, unfold
from .variogram import VariogramModel

__all__ = [
    "AdmmParams",
    "ConvergenceTrace",
    "DivergenceError",
    "Dims3",
    "SearchEllipsoid",
    "VariogramModel",
    "complete_plain",
    "complete_smoothed",
    "fold",
    "frobenius_norm",
    "ordinary_krige",
    "project",
    "project_complement",
    "rse",
    "unfold",
]

__version__ = "0.1.0"
