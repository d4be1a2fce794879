"""Quenched central limit theorems for discrete Fourier transforms of linear processes."""
__version__ = "0.1.0"
