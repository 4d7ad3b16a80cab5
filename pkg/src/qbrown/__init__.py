"""Classical and quantum Brownian-motion numerics."""
__version__ = "0.1.0"
