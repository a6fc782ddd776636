"""Numerical engine for the semilinear heat equation with absorption and
infinite initial data."""

__version__ = "0.1.0"
