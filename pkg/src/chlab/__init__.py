"""Numerical laboratory for smooth Camassa-Holm solitons."""

from .errors import ChlabError, ConfigError, InvalidParameter, NumericalBreakdown
from .spectral import Grid, WeightParam

__all__ = ["ChlabError", "ConfigError", "InvalidParameter", "NumericalBreakdown", "Grid", "WeightParam"]
__version__ = "0.1.0"
