"""Lexicon-based audit of stylistic alignment and gender gaps in LLM-rewritten abstracts."""

__version__ = "0.1.0"
