"""Streaming annotation pipeline for policy topic labeling of parliamentary corpora."""

__version__ = "0.1.0"
