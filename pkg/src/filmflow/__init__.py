"""Verification toolkit for viscous multiphase flow with surface tension and flow.

The package evaluates manufactured bulk and surface fields on analytic moving
geometries and numerically certifies the identities of the underlying model:
tangential calculus, transport theorems, integration by parts, variational
force derivations, conservation laws, and thermodynamic potentials.
"""

from .expr import ScalarField, VectorField, field, parse, vector

__all__ = ["ScalarField", "VectorField", "field", "parse", "vector"]
__version__ = "0.1.0"
