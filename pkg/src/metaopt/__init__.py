"""Learned-update optimization for large wireless sum-rate problems."""
__version__ = "0.1.0"
