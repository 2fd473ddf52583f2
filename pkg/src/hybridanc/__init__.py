"""Hybrid GFANC-FxNLMS active noise control simulator."""

__version__ = "0.1.0"
