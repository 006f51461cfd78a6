"""
Prefect flows for the radiative transfer reduced-order study.
"""

from .reproduction_pipeline import reproduction_pipeline

__all__ = ["reproduction_pipeline"]
