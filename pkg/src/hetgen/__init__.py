"""Generalization bounds and simulations for one-round distributed learning
under heterogeneous client data."""

__version__ = "0.1.0"
