"""Adaptive influence maximization with multiple activation trials."""

__version__ = "0.1.0"
