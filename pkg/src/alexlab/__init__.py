"""alexlab: Poisson solving and inequality experiments on polyhedral cone surfaces."""

__version__ = "0.1.0"
