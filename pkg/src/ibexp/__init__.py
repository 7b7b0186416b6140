"""Exponents of information-bottleneck source coding under logarithmic loss."""

__version__ = "0.1.0"
