"""Point-constraint equilibria: rigid particle placement, penalty (soft) and
hard point constraints on the coercivity subspace, and the delta-convergence
study.

Both solvers enforce the four orthogonality constraints (1, u) = 0 and
(nu_i, u) = 0 with Lagrange multipliers so the residuals are reportable;
hard point constraints add one multiplier row per attachment point.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, ParameterError
from .fem import PointLocator, SaddleSystem, h2_norm, solve_saddle
from .mesh import TriangleMesh
from .model import QuadraticForm

#: Points closer than this (relative to R) are rejected as duplicates.
DUPLICATE_TOL = 1e-8


@dataclass(frozen=True)
class RigidPose:
    """Six-parameter rigid map: rotations about x, y, z then a translation."""

    q: tuple[float, float, float, float, float, float]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        if len(q) != 6 or not all(np.isfinite(q)):
            raise ParameterError(f"pose needs 6 finite parameters, got {self.q}")
        object.__setattr__(self, "q", q)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls((0.0, 0.0, 0.0, 0.0, 0.0, 0.0))

    def rotation(self) -> np.ndarray:
        q1, q2, q3 = self.q[:3]
        cx, sx = np.cos(q1), np.sin(q1)
        cy, sy = np.cos(q2), np.sin(q2)
        cz, sz = np.cos(q3), np.sin(q3)
        Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return Rx @ Ry @ Rz

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.q[3:], dtype=float)


def rigid_transform(pose: RigidPose, x) -> np.ndarray:
    """Apply the rigid map R_x R_y R_z x + t to one point or an (L,3) array."""
    x = np.asarray(x, dtype=float)
    return x @ pose.rotation().T + pose.translation


@dataclass(frozen=True)
class ParticleSpec:
    """A particle: rigidly posed reference attachment points with heights."""

    pose: RigidPose
    local_points: np.ndarray   # (L, 3)
    heights: np.ndarray        # (L,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.local_points, dtype=float))
        hts = np.atleast_1d(np.asarray(self.heights, dtype=float))
        if pts.shape[0] == 0:
            raise ParameterError("particle needs at least one attachment point")
        if hts.shape[0] == 1 and pts.shape[0] > 1:
            hts = np.full(pts.shape[0], hts[0])
        if hts.shape[0] != pts.shape[0]:
            raise ParameterError("heights and local_points length mismatch")
        object.__setattr__(self, "local_points", pts)
        object.__setattr__(self, "heights", hts)


@dataclass(frozen=True)
class ConstraintSet:
    """Attachment points on the reference sphere with target heights."""

    points: np.ndarray     # (L, 3), on the sphere
    heights: np.ndarray    # (L,)
    delta: float | None    # penalty parameter; None = hard constraints

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        hts = np.atleast_1d(np.asarray(self.heights, dtype=float))
        if pts.shape[0] != hts.shape[0]:
            raise ParameterError("heights and points length mismatch")
        if self.delta is not None and self.delta <= 0:
            raise ParameterError(f"penalty delta must be positive, got {self.delta}")
        scale = float(np.max(np.linalg.norm(pts, axis=1)))
        for i in range(pts.shape[0]):
            d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
            if d.size and np.min(d) < DUPLICATE_TOL * scale:
                j = i + 1 + int(np.argmin(d))
                raise ParameterError(f"attachment points {i} and {j} coincide")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "heights", hts)

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    def noncoplanar(self) -> bool:
        """True when some four points are non-coplanar (hard wellposedness)."""
        if self.num_points < 4:
            return False
        centered = self.points - self.points.mean(axis=0)
        return np.linalg.matrix_rank(centered, tol=1e-10 * np.abs(centered).max()) >= 3


def materialize(particle: ParticleSpec, mesh: TriangleMesh,
                delta: float | None = None) -> ConstraintSet:
    """Pose the particle and project its points radially to the sphere."""
    if mesh.radius_hint is None:
        raise ParameterError("materialize requires a sphere mesh with radius_hint")
    moved = rigid_transform(particle.pose, particle.local_points)
    norms = np.linalg.norm(moved, axis=1)
    if np.any(norms < 1e-12 * mesh.radius_hint):
        raise GeometryError("a transformed point sits at the origin; cannot project")
    projected = moved * (mesh.radius_hint / norms)[:, None]
    return ConstraintSet(points=projected, heights=particle.heights, delta=delta)


@dataclass
class SolveReport:
    energy: float                   # 1/2 a(u,u)
    point_values: np.ndarray        # u(p_j)
    point_residuals: np.ndarray     # u(p_j) - Z_j
    orthogonality_multipliers: np.ndarray   # 4 values for c0, c1, c2, c3
    point_multipliers: np.ndarray | None    # reactions, hard mode only
    delta: float | None


def _point_rows(form: QuadraticForm, cs: ConstraintSet) -> sp.csr_matrix:
    locator = PointLocator(form.mesh)
    return sp.vstack([locator.row(p) for p in cs.points]).tocsr()


def solve_penalty(form: QuadraticForm, cs: ConstraintSet) -> tuple[np.ndarray, SolveReport]:
    """Penalized equilibrium: (A + (1/delta) P^T P) u = (1/delta) P^T Z on U_nu."""
    if cs.delta is None:
        raise ParameterError("solve_penalty needs a ConstraintSet with delta set")
    P = _point_rows(form, cs)
    Apen = (form.A + (1.0 / cs.delta) * (P.T @ P)).tocsr()
    f = (1.0 / cs.delta) * (P.T @ cs.heights)
    system = SaddleSystem(
        A=Apen, B=form.constraints, f=f, g=np.zeros(4),
        row_labels=["c0 (mean)", "c1 (nu_x)", "c2 (nu_y)", "c3 (nu_z)"],
    )
    u, lam = solve_saddle(system)
    values = P @ u
    report = SolveReport(
        energy=0.5 * form.evaluate(u, u),
        point_values=values,
        point_residuals=values - cs.heights,
        orthogonality_multipliers=lam,
        point_multipliers=None,
        delta=cs.delta,
    )
    return u, report


def solve_hard(
    form: QuadraticForm, cs: ConstraintSet, check_wellposed: bool = False
) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Hard interpolation u(p_j) = Z_j with point-multiplier reactions."""
    if check_wellposed and not cs.noncoplanar():
        raise ParameterError(
            "hard constraints need at least 4 non-coplanar points for guaranteed coercivity"
        )
    P = _point_rows(form, cs)
    B = sp.vstack([form.constraints, P]).tocsr()
    labels = ["c0 (mean)", "c1 (nu_x)", "c2 (nu_y)", "c3 (nu_z)"] + [
        f"point {j} at {cs.points[j].tolist()}" for j in range(cs.num_points)
    ]
    g = np.concatenate([np.zeros(4), cs.heights])
    system = SaddleSystem(A=form.A, B=B, f=np.zeros(form.mesh.num_vertices), g=g,
                          row_labels=labels)
    u, lam = solve_saddle(system)
    values = P @ u
    report = SolveReport(
        energy=0.5 * form.evaluate(u, u),
        point_values=values,
        point_residuals=values - cs.heights,
        orthogonality_multipliers=lam[:4],
        point_multipliers=lam[4:],
        delta=None,
    )
    return u, lam[4:], report


@dataclass
class RateTable:
    deltas: list[float]
    errors: list[float]          # discrete H2 distance to the hard solution
    energies: list[float]
    slope: float                 # fitted log(err) vs log(delta)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("delta [1],h2_error [length],penalty_energy [energy]\n")
        for d, e, en in zip(self.deltas, self.errors, self.energies):
            buf.write(f"{d:.17g},{e:.17g},{en:.17g}\n")
        buf.write(f"# fitted rate: {self.slope:.6g}\n")
        return buf.getvalue()


def convergence_study(form: QuadraticForm, cs: ConstraintSet, delta_list) -> RateTable:
    """Penalty-to-hard convergence: fits the rate of ||u - u_delta||_{H2} in delta.

    The hard solution on the same mesh is the delta -> 0 reference.
    """
    deltas = [float(d) for d in delta_list]
    if len(deltas) < 2 or any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise ParameterError("delta_list must be strictly decreasing with >= 2 values")
    hard_cs = ConstraintSet(points=cs.points, heights=cs.heights, delta=None)
    u_hard, _, _ = solve_hard(form, hard_cs)
    errors, energies = [], []
    for d in deltas:
        u_d, rep = solve_penalty(form, ConstraintSet(cs.points, cs.heights, d))
        errors.append(h2_norm(form.M, form.S, form.m_lumped, u_hard - u_d))
        energies.append(rep.energy)
    slope = float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])
    return RateTable(deltas=deltas, errors=errors, energies=energies, slope=slope)


# -- reference configurations -------------------------------------------------

def icosahedron_points(radius: float = 1.0) -> np.ndarray:
    """The 12 vertices of the pole-oriented icosahedron (Figure-1 layout)."""
    from .mesh import _pole_icosahedron

    verts, _ = _pole_icosahedron(radius)
    return verts


def equator_points(count: int = 10, radius: float = 1.0, phase: float = np.pi / 10.0) -> np.ndarray:
    """Equally spaced equator points; the default phase interleaves them with
    the icosahedral vertex azimuths so the rotoreflection symmetry holds."""
    ang = phase + 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(count)])


def polar_ring_points(
    ring_angle_deg: float = 10.0, points_per_ring: int = 6, radius: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Two rings of attachment points around the poles with heights
    alternating between -1 and +1, antisymmetric north/south.

    The ring polar angle is a free parameter of the reproduction recipe; the
    south ring is the antipodal image of the north ring so the configuration
    is odd under the antipodal map.
    """
    theta = np.deg2rad(ring_angle_deg)
    ang = 2.0 * np.pi * np.arange(points_per_ring) / points_per_ring
    north = np.column_stack([
        radius * np.sin(theta) * np.cos(ang),
        radius * np.sin(theta) * np.sin(ang),
        np.full(points_per_ring, radius * np.cos(theta)),
    ])
    heights_north = np.where(np.arange(points_per_ring) % 2 == 0, 1.0, -1.0)
    south = -north
    heights_south = -heights_north
    return np.vstack([north, south]), np.concatenate([heights_north, heights_south])
