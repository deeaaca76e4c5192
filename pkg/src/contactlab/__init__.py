"""Simulation and estimation tools for contact processes on countable groups."""

__version__ = "0.1.0"
