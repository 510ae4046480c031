"""Variational quantum PDE solver: simulator, experiment harness, verifier."""

__version__ = "0.1.0"
