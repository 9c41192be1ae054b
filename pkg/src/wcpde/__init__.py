"""Numerical laboratory for weakly coupled parabolic systems with unbounded coefficients."""

__version__ = "0.1.0"
