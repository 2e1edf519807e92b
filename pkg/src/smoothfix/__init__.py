"""Fixed points of smoothing transforms: simulation and verification toolkit."""

__version__ = "0.1.0"
