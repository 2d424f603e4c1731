"""Stochastic SIS_E metapopulation simulation with simulation-based inference."""

__version__ = "0.1.0"
