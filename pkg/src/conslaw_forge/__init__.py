"""Nonlinear self-adjointness and conservation laws for anisotropic heat equations."""

__version__ = "0.1.0"
