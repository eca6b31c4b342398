"""Numerical laboratory for equilibrium measures of endomorphisms of CP^k."""

__version__ = "0.1.0"
