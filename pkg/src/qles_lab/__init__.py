"""Simulation and costing tools for measuring quantum linear-solver outputs."""

__version__ = "0.1.0"
