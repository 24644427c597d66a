"""Adaptive phase-field fracture for strain-limiting solids under anti-plane shear."""

__version__ = "0.1.0"
