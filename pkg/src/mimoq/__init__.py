"""Rank-one MIMO Q ensembles with pessimistic offline actor-critic training."""

__version__ = "0.1.0"
