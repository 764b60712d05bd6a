"""Two-time stochastic quantization on the lattice."""
__version__ = "0.1.0"
