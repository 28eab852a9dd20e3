"""Testbed comparing centralized and distributed NSGA-II designs on fog application placement."""

__version__ = "0.1.0"
