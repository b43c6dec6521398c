"""Selective sampling and interactive imitation learning with noisy experts."""

__version__ = "0.1.0"
