"""Solver and simulation toolkit for a one-dimensional chemotaxis model with
memory drift: singular-kernel admissibility checks, a spectral density
solver with product-integrated memory, interacting-particle simulation, and
closed-form comparison densities."""

__version__ = "0.1.0"
