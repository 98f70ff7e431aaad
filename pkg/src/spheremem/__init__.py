"""Finite element toolkit for small deformations of spherical membranes.

Builds icosphere meshes, assembles the quadratic bending/tension form with
its degenerate-mode constraints, solves point-attachment equilibria (penalty
and hard), runs a conserved phase-field/deformation gradient flow, and checks
the quadratic model against a nonlinear geometry oracle.
"""

__version__ = "0.1.0"

from .mesh import TriangleMesh, build_icosphere, mesh_checksum, mesh_stats, validate_closed
from .model import ModelParams, QuadraticForm, assemble_quadratic_form

__all__ = [
    "TriangleMesh",
    "build_icosphere",
    "mesh_checksum",
    "mesh_stats",
    "validate_closed",
    "ModelParams",
    "QuadraticForm",
    "assemble_quadratic_form",
    "__version__",
]
