"""Simulator for federated pre-training of initializations for downstream FL tasks."""

__version__ = "0.1.0"
