"""Cooperative branching-coalescent simulation toolkit."""

__version__ = "0.1.0"
