"""Amortized invariance learning with descriptor-conditioned hypernetworks."""

__version__ = "0.1.0"
