"""Latent space imaging: co-designed binary masks and a digital encoder that map
single-pixel measurements into the latent space of a frozen decoder."""

__version__ = "0.1.0"
