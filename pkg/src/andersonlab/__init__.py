"""Finite-volume Anderson model laboratory: spectra, counts and local statistics."""

__version__ = "0.1.0"
