"""Delay-constrained throughput of correlated MIMO channels with Markov scattering."""

__version__ = "0.1.0"
