"""Hierarchical self-repelling walk in four dimensions: Green's functions,
renormalization-group flow, contour Laplace inversion and Monte Carlo."""

__version__ = "0.1.0"
