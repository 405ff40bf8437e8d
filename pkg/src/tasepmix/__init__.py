"""Exclusion process on a ring and its periodic last passage percolation picture."""

__version__ = "0.1.0"
