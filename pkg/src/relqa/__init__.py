"""Relation-guided QA pre-training data factory and desk-scale trainer."""

__version__ = "0.1.0"
