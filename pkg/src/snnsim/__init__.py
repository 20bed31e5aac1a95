"""Discrete-time spiking neural network simulation."""

__version__ = "0.1.0"
