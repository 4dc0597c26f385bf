"""Numerical laboratory for segregated configurations of competing elliptic systems."""

__version__ = "0.1.0"
