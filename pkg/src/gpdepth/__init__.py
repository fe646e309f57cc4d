"""Depth completion by Gaussian-process fusion of dense and sparse depth."""

__version__ = "0.1.0"
