"""Flexible-payload radio resource management for multibeam GEO satellites."""

__version__ = "0.1.0"
