"""Pseudo-spectral Littlewood-Paley toolkit for 2-D inhomogeneous incompressible Navier-Stokes."""

from .errors import LpnsError, NumericalError, ValidationError
from .spectral import Grid, SpectralField, to_physical, to_spectral

__version__ = "0.1.0"

__all__ = ["Grid", "SpectralField", "to_physical", "to_spectral", "LpnsError", "NumericalError", "ValidationError"]
