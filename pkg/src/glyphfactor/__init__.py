"""Glyph images factored into sign and scribe embeddings, with evaluation tools."""

__version__ = "0.1.0"
