"""Pseudo-spectral 2D gravity water waves with a semiclassical analysis toolkit."""

__version__ = "0.1.0"

from .fourier import GridFunction, MultiplierSymbol  # noqa: F401
