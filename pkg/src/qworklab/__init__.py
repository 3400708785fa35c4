"""Numerical laboratory comparing quantum work definitions."""

__version__ = "0.1.0"
