"""Coupled-mode envelope approximations for periodic NLS wavepackets."""

__version__ = "0.1.0"
