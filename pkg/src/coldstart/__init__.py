"""Entropic barriers for MCMC: a radial regression model, Gaussian priors,
pCN / MALA / sphere samplers and the measures used to analyse them."""

__version__ = "0.1.0"
