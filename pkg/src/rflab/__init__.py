"""Numerical laboratory for Gaussian isoperimetry along model Ricci flows."""

__version__ = "0.1.0"
