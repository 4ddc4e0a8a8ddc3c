"""Numerical laboratory for very-weak-solution nets of Schrödinger-type
equations with singular coefficients."""

__version__ = "0.1.0"
