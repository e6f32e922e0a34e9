"""Pseudo-spectral Galerkin Navier–Stokes on the 3-torus with a compatibility lift."""

__version__ = "0.1.0"
