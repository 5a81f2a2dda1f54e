"""Reflected (obstacle) stochastic PDE laboratory."""

__version__ = "0.1.0"
