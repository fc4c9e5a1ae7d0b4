"""Numerics for quasiperiodic SL(2,R) cocycles: directions, induction, hyperbolicity certificates."""

__version__ = "0.1.0"
