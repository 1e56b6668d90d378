"""Embedding-space diffusion for fine-grained text style transfer."""

__version__ = "0.1.0"
