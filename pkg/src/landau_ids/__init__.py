"""Reduced integrated density of states for random Landau Hamiltonians."""

__version__ = "0.1.0"
