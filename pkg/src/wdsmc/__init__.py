"""Likelihood-free parameter estimation from aggregate (distribution-level)
observations with a Wasserstein-distance sequential Monte Carlo sampler."""

__version__ = "0.1.0"
