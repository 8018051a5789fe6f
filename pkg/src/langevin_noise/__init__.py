"""Langevin-type samplers with state-dependent and non-Gaussian noise."""

__version__ = "0.1.0"
