"""Surrogate-assisted GAN inverse design of ternary metasurface patterns."""

__version__ = "0.1.0"
