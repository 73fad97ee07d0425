"""Minimum-cost flow homogenization on embedded graphs."""
__version__ = "0.1.0"
