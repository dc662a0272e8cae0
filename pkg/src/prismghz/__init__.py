"""Prism-type local hidden variable models for the GHZ experiment."""

__version__ = "0.1.0"
