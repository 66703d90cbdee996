"""Generalized heuristic networks for model-agnostic classical planning."""

__version__ = "0.1.0"
