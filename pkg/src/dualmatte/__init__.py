"""Desk-scale end-to-end video omnimatte with dual LoRA experts."""

__version__ = "0.1.0"
