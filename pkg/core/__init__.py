"""Stability regions, simulation and decay certification for two-species chemotaxis-competition systems."""

__version__ = "0.1.0"
