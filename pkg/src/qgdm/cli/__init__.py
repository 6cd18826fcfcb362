"""Experiment driver for the diffusion-model simulator."""
