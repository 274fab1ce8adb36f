"""Batch encoder for frames and query texts, writing the engine's SMEB
embedding format plus the line-delimited sidecar index."""

__version__ = "0.1.0"
