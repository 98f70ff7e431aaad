"""Piecewise-linear surface FEM: mass/stiffness assembly, point evaluation,
norms, and direct linear/saddle-point solvers.

All operators are assembled triangle-wise on the polyhedral surface.  The
discrete Laplacian used for fourth-order terms is the lumped-mass
reconstruction ``lap(u) = -M_L^{-1} S u``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import AssemblyError, GeometryError, RankDeficiencyError, SolverError
from .mesh import TriangleMesh, triangle_areas_normals

_DEGENERATE_REL_AREA = 1e-14


def assemble_mass(mesh: TriangleMesh, lumped: bool = False) -> sp.csr_matrix:
    """P1 mass matrix; exact per-triangle integration, or row-sum lumped."""
    areas, _ = triangle_areas_normals(mesh)
    _check_degenerate(areas)
    t = mesh.triangles
    n = mesh.num_vertices
    if lumped:
        diag = np.zeros(n)
        for k in range(3):
            np.add.at(diag, t[:, k], areas / 3.0)
        return sp.diags(diag).tocsr()
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(areas * ((2.0 if i == j else 1.0) / 12.0))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return m.tocsr()


def lumped_diagonal(mesh: TriangleMesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix as a dense vector."""
    areas, _ = triangle_areas_normals(mesh)
    _check_degenerate(areas)
    diag = np.zeros(mesh.num_vertices)
    for k in range(3):
        np.add.at(diag, mesh.triangles[:, k], areas / 3.0)
    return diag


def assemble_stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    """Cotangent stiffness: S_ij = integral of grad(chi_i) . grad(chi_j)."""
    areas, _ = triangle_areas_normals(mesh)
    _check_degenerate(areas)
    t = mesh.triangles
    p = mesh.vertices[t]
    n = mesh.num_vertices
    rows, cols, vals = [], [], []
    # Edge opposite local vertex k connects the other two vertices; the
    # off-diagonal weight is -cot(angle at k)/2.
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e1 = p[:, i] - p[:, k]
        e2 = p[:, j] - p[:, k]
        cot = np.einsum("ij,ij->i", e1, e2) / (2.0 * areas)
        w = 0.5 * cot
        rows.extend([t[:, i], t[:, j], t[:, i], t[:, j]])
        cols.extend([t[:, j], t[:, i], t[:, i], t[:, j]])
        vals.extend([-w, -w, w, w])
    s = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return s.tocsr()


def _check_degenerate(areas: np.ndarray) -> None:
    if areas.size == 0:
        raise AssemblyError("mesh has no triangles")
    if np.min(areas) <= _DEGENERATE_REL_AREA * np.max(areas):
        raise AssemblyError("degenerate triangle encountered during assembly")


def _closest_point_on_triangle(p: np.ndarray, a, b, c):
    """Closest point to p on triangle (a,b,c); returns (point, barycentric)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return a, np.array([1.0, 0.0, 0.0])
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return b, np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return a + v * ab, np.array([1.0 - v, v, 0.0])
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return c, np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return a + w * ac, np.array([1.0 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), np.array([0.0, 1.0 - w, w])
    denom = va + vb + vc
    v = vb / denom
    w = vc / denom
    return a + v * ab + w * ac, np.array([1.0 - v - w, v, w])


class PointLocator:
    """Closest-point queries against a fixed mesh, KD-tree accelerated."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        self._centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        self._tree = cKDTree(self._centroids)
        self._scale = mesh.radius_hint or float(np.max(np.linalg.norm(mesh.vertices, axis=1)))

    def locate(self, p) -> tuple[float, int, np.ndarray]:
        """Distance, triangle index and barycentric weights of the closest point."""
        p = np.asarray(p, dtype=float)
        k = min(32, self.mesh.num_triangles)
        _, cand = self._tree.query(p, k=k)
        best = None
        for ti in np.atleast_1d(cand):
            a, b, c = self.mesh.vertices[self.mesh.triangles[ti]]
            q, bary = _closest_point_on_triangle(p, a, b, c)
            d = np.linalg.norm(p - q)
            if best is None or d < best[0]:
                best = (d, int(ti), bary)
        return best

    def row(self, p, tol_rel: float = 0.05) -> sp.csr_matrix:
        d, ti, bary = self.locate(p)
        if d > tol_rel * self._scale:
            raise GeometryError(
                f"point {np.asarray(p).tolist()} is {d:.3g} from the surface "
                f"(tolerance {tol_rel * self._scale:.3g})"
            )
        idx = self.mesh.triangles[ti]
        keep = bary > 1e-14
        return sp.csr_matrix(
            (bary[keep], (np.zeros(int(keep.sum()), dtype=int), idx[keep])),
            shape=(1, self.mesh.num_vertices),
        )


def point_functional(mesh: TriangleMesh, p, tol_rel: float = 0.05) -> sp.csr_matrix:
    """Sparse row evaluating the PL interpolant at the closest-point
    projection of ``p`` onto the mesh surface.

    Raises :class:`GeometryError` when ``p`` is farther than ``tol_rel``
    times the mesh scale from the surface.  For many points against one mesh
    use :class:`PointLocator` directly.
    """
    return PointLocator(mesh).row(p, tol_rel=tol_rel)


@dataclass
class SaddleSystem:
    """Symmetric block system [[A, B^T], [B, 0]] [x; lam] = [f; g]."""

    A: sp.spmatrix
    B: sp.spmatrix
    f: np.ndarray
    g: np.ndarray
    row_labels: list[str] | None = None


def _check_constraint_rank(B: sp.spmatrix, labels=None) -> None:
    """Verify B has full row rank; name the dependent rows otherwise."""
    dense = np.asarray(B.todense())
    r = dense.shape[0]
    if r == 0:
        return
    # Column-pivoted QR of B^T exposes dependent rows through tiny pivots.
    _, rdiag, piv = scipy.linalg.qr(dense.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rdiag))
    tol = max(dense.shape) * np.finfo(float).eps * (diag[0] if diag.size else 1.0)
    bad = [int(piv[i]) for i in range(r) if i >= diag.size or diag[i] <= tol]
    if bad:
        names = [labels[i] if labels else f"row {i}" for i in bad]
        raise RankDeficiencyError(
            f"constraint block is rank deficient; dependent rows: {names}", dependent_rows=bad
        )


def _direct_solve_refined(K: sp.spmatrix, rhs: np.ndarray, max_refine: int = 4) -> np.ndarray:
    """Sparse LU solve with iterative refinement in the assembled matrix."""
    K = K.tocsc()
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("factorization produced non-finite solution (singular system)")
    norm_rhs = np.linalg.norm(rhs)
    for _ in range(max_refine):
        r = rhs - K @ x
        if np.linalg.norm(r) <= 1e-13 * max(norm_rhs, 1.0):
            break
        x = x + lu.solve(r)
    return x


def solve_spd(A: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Direct solve of a symmetric positive definite sparse system."""
    rhs = np.asarray(rhs, dtype=float)
    x = _direct_solve_refined(A, rhs)
    res = np.linalg.norm(A @ x - rhs)
    if res > 1e-10 * max(np.linalg.norm(rhs), 1.0):
        raise SolverError(f"solve_spd residual {res:.3g} exceeds contract")
    return x


def solve_saddle(system: SaddleSystem) -> tuple[np.ndarray, np.ndarray]:
    """Solve the saddle system by one sparse direct factorization.

    Returns ``(x, lam)``.  The residual contract |Ax + B^T lam - f| <=
    1e-10 |f| and |Bx - g| <= 1e-10 (|g|+1) is enforced.
    """
    A, B = system.A.tocsr(), system.B.tocsr()
    f = np.asarray(system.f, dtype=float)
    g = np.asarray(system.g, dtype=float)
    _check_constraint_rank(B, system.row_labels)
    r = B.shape[0]
    K = sp.bmat([[A, B.T], [B, None]], format="csc")
    rhs = np.concatenate([f, g])
    sol = _direct_solve_refined(K, rhs)
    x, lam = sol[: A.shape[0]], sol[A.shape[0]:]
    scale = max(np.linalg.norm(f), 1.0)
    res1 = np.linalg.norm(A @ x + B.T @ lam - f)
    res2 = np.linalg.norm(B @ x - g)
    if res1 > 1e-10 * scale or res2 > 1e-10 * (np.linalg.norm(g) + 1.0):
        raise SolverError(
            f"saddle solve residuals {res1:.3g}/{res2:.3g} exceed contract"
        )
    return x, lam


def laplacian_apply(S: sp.spmatrix, m_lumped: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Lumped-mass Laplacian reconstruction lap(u) = -M_L^{-1} S u."""
    return -(S @ u) / m_lumped


def h2_norm(M: sp.spmatrix, S: sp.spmatrix, m_lumped: np.ndarray, u: np.ndarray) -> float:
    """Discrete H2 norm (L2 + H1-seminorm + reconstructed-Laplacian L2)."""
    lap = laplacian_apply(S, m_lumped, u)
    return float(np.sqrt(u @ (M @ u) + u @ (S @ u) + lap @ (M @ lap)))
