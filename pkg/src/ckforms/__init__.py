"""Conformal Killing forms: curvature, tractor calculus and prolongation checks."""

__version__ = "0.1.0"
