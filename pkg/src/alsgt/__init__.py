"""Aerial-LiDAR-referenced ground-truth trajectory generation and evaluation."""

__version__ = "0.1.0"
