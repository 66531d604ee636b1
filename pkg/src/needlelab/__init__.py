"""Pseudospectral simulation of a needle-crystal interface with anisotropic surface tension."""

__version__ = "0.1.0"
