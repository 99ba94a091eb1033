"""Desk-scale numerics for gluing constant scalar curvature Kahler metrics."""

__version__ = "0.1.0"
