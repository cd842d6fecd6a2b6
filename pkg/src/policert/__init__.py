"""Certification toolkit for MILP-representable control policies."""

__version__ = "0.1.0"
