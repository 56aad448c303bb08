"""Desk-scale simulator for LEO integrated positioning and communication."""

__version__ = "0.3.0"
