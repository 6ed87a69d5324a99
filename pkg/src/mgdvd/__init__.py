"""Streaming behavior-graph engine with incremental embeddings and
Pearson gallery matching."""

__version__ = "0.1.0"
