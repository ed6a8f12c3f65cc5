"""Lattice simulation of the unit-area quantum sphere."""

__version__ = "0.1.0"
