"""Minimax universal decoding for finite families of discrete memoryless channels."""

__version__ = "0.1.0"
