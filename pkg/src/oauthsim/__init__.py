"""Symbolic Dolev-Yao simulator of an OAuth web model."""

__version__ = "0.1.0"
