"""Truncated Wigner simulator for four-wave-mixing atom interferometry."""

__version__ = "0.1.0"
