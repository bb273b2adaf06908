"""Simulation and verification lab for discrete-time weakly interacting particle systems."""

__version__ = "0.1.0"
