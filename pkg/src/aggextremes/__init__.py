"""Spatial extremes of aggregated data: Husler-Reiss models for cell averages,
joint estimation from aggregates, and downscaling to point locations."""
__version__ = "0.1.0"
