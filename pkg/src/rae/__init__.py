"""Regularized linear auto-encoders for k-NN preserving dimensionality reduction."""

__version__ = "0.1.0"
