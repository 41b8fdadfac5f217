"""Hierarchical colored Petri nets: engine, state-space explorer, and a humanoid-robot control model."""

__version__ = "0.1.0"
