"""Simulator and transition-matrix analysis for relay-based approximate byzantine consensus."""

__version__ = "0.1.0"
