"""Depth-inference termination agent for object navigation on a grid world."""

__version__ = "0.1.0"
