"""Rank-metric codes and private information retrieval over random linear networks."""

__version__ = "0.1.0"
