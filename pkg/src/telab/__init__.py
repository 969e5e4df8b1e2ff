"""Bounds for transition-layer energies in Aviles–Giga type models."""
__version__ = "0.1.0"
