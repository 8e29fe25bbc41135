"""Spatial reasoning agent over geometric tools."""

__version__ = "0.1.0"
