"""Thermal Casimir-Polder forces on polar molecules near planar surfaces."""

__version__ = "0.1.0"
