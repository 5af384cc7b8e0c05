"""Troll detection in discussion threads with a Kohonen self-organizing map."""

__version__ = "0.1.0"
