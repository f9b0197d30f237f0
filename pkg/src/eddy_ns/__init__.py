"""Regularized eddy-viscosity Navier-Stokes toolkit."""
__version__ = "0.1.0"
