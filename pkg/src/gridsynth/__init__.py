"""Synthetic daily smart-home profile generation (VAE-GAN / GAN) and evaluation."""

__version__ = "0.1.0"
