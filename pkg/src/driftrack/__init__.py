"""Complexity of tracking non-admissible curves with drift."""

__version__ = "0.1.0"
