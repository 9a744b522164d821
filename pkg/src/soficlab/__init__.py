"""Finite sofic approximation charts, subshifts and per-chart entropy counts."""

__version__ = "0.1.0"
