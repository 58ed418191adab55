"""Particle-based active-inference driver models."""

__version__ = "0.1.0"
