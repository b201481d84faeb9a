"""Translationese classification and language-tree reconstruction from tagged corpora."""

__version__ = "0.1.0"
