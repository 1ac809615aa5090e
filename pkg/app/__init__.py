"""Krylov complexity of dissipative spin chains."""

__version__ = "0.1.0"
