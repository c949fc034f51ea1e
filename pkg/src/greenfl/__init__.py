"""Deterministic simulator and recommender for carbon-efficient federated learning."""

from .errors import GreenFLError

__version__ = "0.1.0"

__all__ = ["GreenFLError", "__version__"]
