"""Interaction-aware Shapley value explanations."""

__version__ = "0.1.0"
