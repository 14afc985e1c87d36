"""Convergence to equilibrium for parabolic systems coupled by matrix potentials."""

__version__ = "0.1.0"
