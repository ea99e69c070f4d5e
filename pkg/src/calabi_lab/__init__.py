"""Desk-scale numerical laboratory for complete minimal surfaces with Cantor ends."""

__version__ = "0.1.0"
