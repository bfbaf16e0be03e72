"""Embedding extraction bridge for the vadd toolkit."""

__version__ = "0.1.0"
