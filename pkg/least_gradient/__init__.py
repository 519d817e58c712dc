"""Anisotropic least gradient problems with a Dirichlet datum on part of the boundary."""

__version__ = "0.1.0"
