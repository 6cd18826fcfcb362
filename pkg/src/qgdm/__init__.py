"""Density-matrix simulation of quantum generative diffusion models."""

__version__ = "0.1.0"
