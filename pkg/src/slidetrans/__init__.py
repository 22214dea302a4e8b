"""Translate the text embedded in slide images and presentation decks."""

__version__ = "0.1.0"
