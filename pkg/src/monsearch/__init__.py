"""Minimax battle agent with pluggable priors, a turn-based battle engine and evaluation tools."""

__version__ = "0.1.0"
