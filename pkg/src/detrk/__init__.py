"""Numerical building blocks of a frequency-attention deformable detection transformer."""

__version__ = "0.1.0"
