"""Numerical verification lab for limiting absorption principles of contractions."""

__version__ = "0.1.0"
