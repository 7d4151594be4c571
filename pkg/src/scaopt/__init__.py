"""Successive convex approximation and majorization-minimization toolkit."""

__version__ = "0.1.0"
