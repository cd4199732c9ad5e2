"""Differentiation-integration observers, their stability theory and experiments."""

__version__ = "0.1.0"
