"""Rendering of evcatch harness CSV outputs as publication-style figures."""

__version__ = "0.1.0"
