"""Renormalized Mori-Zwanzig reduced order models for KdV with small dispersion."""

__version__ = "0.1.0"
