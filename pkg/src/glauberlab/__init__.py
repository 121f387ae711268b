"""Glauber dynamics, down-up walks and spectral independence at desk scale."""

__version__ = "0.1.0"
