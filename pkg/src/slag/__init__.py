"""Numerical workbench for special Lagrangian torus fibrations on
complexity-one spaces."""

__version__ = "0.1.0"
