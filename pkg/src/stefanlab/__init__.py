"""Simulation laboratory for the transformed stochastic Stefan problem."""
__version__ = "0.1.0"
