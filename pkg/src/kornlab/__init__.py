"""Numerical laboratory for Korn constants of zero-Gaussian-curvature shells."""

__version__ = "0.1.0"
