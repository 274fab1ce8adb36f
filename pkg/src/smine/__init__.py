"""Coarse-to-fine scenario mining over autonomous-driving trajectory logs."""

__version__ = "0.1.0"
