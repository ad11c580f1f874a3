"""Metastable exits of the stochastic Chafee-Infante equation under small
heavy-tailed Levy noise: spectral solver, jump sampling, domain geometry,
first-exit Monte Carlo and exit-law statistics."""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
