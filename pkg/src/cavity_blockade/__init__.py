"""Cavity-polariton-blockade simulation toolkit."""

__version__ = "0.1.0"
