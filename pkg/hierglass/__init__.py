"""Simulation and bound verification for hierarchical random energy and p-spin models."""

__version__ = "0.1.0"
