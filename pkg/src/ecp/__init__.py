"""Enumerate-Conjecture-Prove pipeline for formal answer-construction problems."""

__version__ = "0.1.0"
