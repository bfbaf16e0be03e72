"""Audio-visual scene discrepancy detection toolkit."""

__version__ = "0.1.0"
