"""Offline audio-to-embedding exporter targeting the FEA1 feature format."""

__version__ = "0.1.0"
