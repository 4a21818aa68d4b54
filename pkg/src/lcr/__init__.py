"""Exact Markov-chain analysis and Monte Carlo simulation of Left, Center, Right."""

__version__ = "0.1.0"
