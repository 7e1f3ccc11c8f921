"""Inverse problem of dynamics for two-parametric orbit families."""

__version__ = "0.1.0"
