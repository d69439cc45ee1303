"""Packed convolutional inference over a simulated CKKS slot backend."""

__version__ = "0.1.0"
