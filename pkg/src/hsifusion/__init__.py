"""Hyperspectral super-resolution guided by an unaligned RGB reference."""

__version__ = "0.1.0"
