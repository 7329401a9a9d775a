"""Mask-token named entity recognition experiments on a numpy transformer."""

__version__ = "0.1.0"
