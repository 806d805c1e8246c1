"""Relaxed linearized augmented Lagrangian methods for penalized least squares."""

__version__ = "0.1.0"
