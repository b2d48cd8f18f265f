"""Sweep pipeline: parameters -> simulated sweep -> tables and summary."""
from .pipeline import create_pipeline

__all__ = ["create_pipeline"]
