"""Lookback option pricing with CTMC first-passage probabilities and quadrature."""
__version__ = "0.1.0"
