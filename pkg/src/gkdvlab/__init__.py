"""Pseudo-spectral laboratory for the quartic generalised KdV equation."""
__version__ = "0.1.0"
