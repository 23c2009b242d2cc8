"""Autoencoder-compressed weight updates for federated learning, at desk scale."""

__version__ = "0.1.0"
