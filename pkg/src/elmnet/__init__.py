"""Extreme learning machine classifier with streaming least-squares training,
six hidden-neuron kinds, filter feature ranking and an experiment-grid CLI."""

__version__ = "0.1.0"
