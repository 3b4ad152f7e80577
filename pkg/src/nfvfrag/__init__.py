"""Fragmentation-aware VNF migration: metric, simulator and MHGAT model."""

__version__ = "0.1.0"
