"""Equilibrium and oscillation analysis for bounded linear-threshold networks."""

__version__ = "0.3.0"
