"""Velocity estimation with data-driven reduced order models of the wave equation."""

__version__ = "0.1.0"
