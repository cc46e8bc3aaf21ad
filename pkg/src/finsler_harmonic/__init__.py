"""Centore energy minimisers into Finsler targets and their regularity diagnostics."""

__version__ = "0.1.0"
