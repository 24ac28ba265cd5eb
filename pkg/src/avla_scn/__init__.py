"""Adaptive vortex-search-like optimizer (AVLA) and supply chain network equilibrium tools."""

__version__ = "0.1.0"
