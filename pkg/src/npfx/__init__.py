"""Imputation of intermittent heatmap sequences with continuous latent dynamics."""

__version__ = "0.1.0"
