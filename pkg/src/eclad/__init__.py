"""Concept extraction for convolutional classifiers via pixel-wise
aggregated descriptors, plus a mask-based validation framework and
synthetic benchmark generators."""

__version__ = "0.1.0"

from .backend import ACTIVE_BACKEND

__all__ = ["ACTIVE_BACKEND", "__version__"]
