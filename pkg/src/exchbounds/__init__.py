"""Hoeffding and Bernstein bounds for weighted sums of exchangeable variables."""

__version__ = "0.1.0"
