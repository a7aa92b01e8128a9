"""Lattice laboratory for local multilinear fractional maximal operators."""

__version__ = "0.1.0"
