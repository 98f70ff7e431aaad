"""Quadratic bending model on the discrete sphere.

Assembles the symmetric operator realizing

    a(u,v) = int( kappa lap(u) lap(v)
                  + (sigma - 2 kappa/R^2) grad(u).grad(v)
                  - (2 sigma/R^2) u v )

with the biharmonic part built from the lumped-mass Laplacian
reconstruction, together with the four mass-weighted constraint rows
(1, .) and (nu_i, .) that span the degenerate directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .fem import assemble_mass, assemble_stiffness, lumped_diagonal
from .mesh import TriangleMesh


@dataclass(frozen=True)
class ModelParams:
    """Bending rigidity, surface tension and reference radius."""

    kappa: float
    sigma: float
    R: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")
        if self.R <= 0:
            raise ParameterError(f"R must be positive, got {self.R}")

    @property
    def lambda0(self) -> float:
        """Volume multiplier at which the sphere is a critical point."""
        return -2.0 * self.sigma / self.R


def constraint_rows(mesh: TriangleMesh, M: sp.spmatrix | None = None) -> sp.csr_matrix:
    """Rows c0 = (1, .) and c_i = (nu_i, .) with nu = x/R at the vertices."""
    if mesh.radius_hint is None:
        raise ParameterError("constraint rows require a sphere mesh with radius_hint")
    if M is None:
        M = assemble_mass(mesh)
    n = mesh.num_vertices
    nu = mesh.vertices / mesh.radius_hint
    rows = [np.ones(n), nu[:, 0], nu[:, 1], nu[:, 2]]
    return sp.csr_matrix(np.vstack([M @ r for r in rows]))


@dataclass
class QuadraticForm:
    """Assembled quadratic form with its FEM operators and constraints."""

    mesh: TriangleMesh
    params: ModelParams
    M: sp.csr_matrix
    S: sp.csr_matrix
    m_lumped: np.ndarray
    A: sp.csr_matrix
    constraints: sp.csr_matrix    # 4 x n: rows c0, c1, c2, c3

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.A @ v))

    def c0(self, u: np.ndarray) -> float:
        return float((self.constraints[0] @ u)[0])

    def evaluate_consistent(self, u: np.ndarray, v: np.ndarray) -> float:
        """a(u,v) with the consistent-mass Laplacian reconstruction.

        Evaluation-only alternative for convergence comparisons; the sparse
        operator ``A`` always uses the lumped reconstruction.
        """
        from scipy.sparse.linalg import spsolve

        p = self.params
        R2 = p.R**2
        bih = float((self.S @ u) @ spsolve(self.M.tocsc(), self.S @ v))
        return (
            p.kappa * bih
            + (p.sigma - 2.0 * p.kappa / R2) * float(u @ (self.S @ v))
            - (2.0 * p.sigma / R2) * float(u @ (self.M @ v))
        )

    @property
    def area(self) -> float:
        return float(self.m_lumped.sum())

    def normal_modes(self) -> np.ndarray:
        """Vertex values of the kernel candidates 1, nu1, nu2, nu3 (4 x n)."""
        nu = self.mesh.vertices / self.params.R
        return np.vstack([np.ones(self.mesh.num_vertices), nu.T])


def assemble_quadratic_form(mesh: TriangleMesh, params: ModelParams) -> QuadraticForm:
    """Assemble a(.,.) and the constraint rows on a sphere mesh.

    The mesh radius must match ``params.R``.
    """
    if mesh.radius_hint is None or abs(mesh.radius_hint - params.R) > 1e-9 * params.R:
        raise ParameterError(
            f"mesh radius {mesh.radius_hint} does not match model radius {params.R}"
        )
    M = assemble_mass(mesh)
    S = assemble_stiffness(mesh)
    mL = lumped_diagonal(mesh)
    R2 = params.R**2
    bihar = S.T @ sp.diags(1.0 / mL) @ S
    A = params.kappa * bihar + (params.sigma - 2.0 * params.kappa / R2) * S \
        - (2.0 * params.sigma / R2) * M
    A = ((A + A.T) * 0.5).tocsr()   # exact symmetry despite roundoff
    C = constraint_rows(mesh, M)
    return QuadraticForm(mesh=mesh, params=params, M=M, S=S, m_lumped=mL, A=A, constraints=C)


def quadratic_lagrangian(u: np.ndarray, mu: float, form: QuadraticForm) -> float:
    """L(u, mu) = 1/2 a(u,u) + mu (u, 1)."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != form.mesh.num_vertices:
        raise ParameterError("field length does not match mesh vertex count")
    return 0.5 * form.evaluate(u, u) + mu * form.c0(u)
