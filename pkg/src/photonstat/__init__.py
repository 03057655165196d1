"""Steady-state coherence and photon statistics of two incoherently pumped,
coupled two-level emitters."""

__version__ = "0.1.0"
