"""Adaptive task allocation with learned neighbourhoods and retained knowledge."""

__version__ = "0.1.0"
