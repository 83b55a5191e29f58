"""Incomplete two-view clustering with diffusion-completed latents."""

__version__ = "0.1.0"
