"""Active learning for fixed-design regression: importance-weighted least
squares, penalized scheme/model selection, disagreement-based sequential
sampling, and a Monte Carlo harness for the accompanying probability bounds."""

__version__ = "0.1.0"
