"""Icosphere generation and geometric statistics for triangulated spheres.

The reference surface is the sphere of radius ``R`` triangulated by recursive
subdivision of a regular icosahedron, with new vertices reprojected to the
exact sphere.  The icosahedron is oriented with vertices at the north and
south poles so that the mesh inherits the full icosahedral symmetry group
about the z-axis (C5 rotations and the S10 rotoreflection), which the
constraint experiments exploit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshTopologyError, SizeLimitError

#: Hard cap on subdivision depth; level 8 is ~655k vertices.
MAX_LEVEL = 8

#: Relative tolerance for "vertex lies on the sphere" checks.
SPHERE_TOL = 1e-12


@dataclass(frozen=True)
class TriangleMesh:
    """Closed oriented triangle surface.

    ``radius_hint`` is set when the vertices sample a sphere of that radius
    (the reference configuration); perturbed meshes carry ``None``.
    """

    vertices: np.ndarray       # (n, 3) float64
    triangles: np.ndarray      # (m, 3) int64, outward oriented
    radius_hint: float | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]


@dataclass(frozen=True)
class MeshStats:
    num_vertices: int
    num_triangles: int
    h_max: float
    total_area: float
    enclosed_volume: float


def _pole_icosahedron(radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Regular icosahedron with vertices at (0,0,+-R)."""
    z = radius / np.sqrt(5.0)
    r = 2.0 * radius / np.sqrt(5.0)
    verts = [(0.0, 0.0, radius)]
    for k in range(5):
        a = 2.0 * np.pi * k / 5.0
        verts.append((r * np.cos(a), r * np.sin(a), z))
    for k in range(5):
        a = 2.0 * np.pi * k / 5.0 + np.pi / 5.0
        verts.append((r * np.cos(a), r * np.sin(a), -z))
    verts.append((0.0, 0.0, -radius))
    verts = np.array(verts)

    tris = []
    for k in range(5):
        kn = (k + 1) % 5
        u0, u1 = 1 + k, 1 + kn
        l0, l1 = 6 + k, 6 + kn
        tris.append((0, u0, u1))          # top cap
        tris.append((u0, l0, u1))         # upper band
        tris.append((l0, l1, u1))         # lower band
        tris.append((11, l1, l0))         # bottom cap
    tris = np.array(tris, dtype=np.int64)

    # Fix outward orientation using convexity: normal must point away from
    # the origin.
    p = verts[tris]
    normals = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centroids = p.mean(axis=1)
    flip = np.einsum("ij,ij->i", normals, centroids) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return verts, tris


def _subdivide(verts: np.ndarray, tris: np.ndarray, radius: float):
    """Split every triangle in four; midpoints are reprojected to the sphere."""
    verts = list(map(tuple, verts))
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        idx = cache.get(key)
        if idx is not None:
            return idx
        m = 0.5 * (np.asarray(verts[i]) + np.asarray(verts[j]))
        m *= radius / np.linalg.norm(m)
        verts.append(tuple(m))
        idx = len(verts) - 1
        cache[key] = idx
        return idx

    out = []
    for a, b, c in tris:
        ab = midpoint(a, b)
        bc = midpoint(b, c)
        ca = midpoint(c, a)
        out.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.array(verts), np.array(out, dtype=np.int64)


def build_icosphere(radius: float, level: int) -> TriangleMesh:
    """Icosahedron projected to radius ``radius`` and subdivided ``level`` times.

    Vertex count is 10*4**level + 2.  Raises :class:`SizeLimitError` above
    :data:`MAX_LEVEL`.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    if level > MAX_LEVEL:
        raise SizeLimitError(f"subdivision level {level} exceeds cap {MAX_LEVEL}")
    verts, tris = _pole_icosahedron(radius)
    for _ in range(level):
        verts, tris = _subdivide(verts, tris, radius)
    return TriangleMesh(verts, tris, radius_hint=radius)


def edges_of(triangles: np.ndarray) -> np.ndarray:
    """Unique undirected edges (e0 < e1) of a triangle list."""
    e = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def validate_closed(mesh: TriangleMesh) -> None:
    """Check watertightness and consistent orientation.

    Every directed edge must appear exactly once, i.e. each undirected edge is
    shared by exactly two triangles traversed in opposite directions.
    """
    t = mesh.triangles
    n = mesh.num_vertices
    directed = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    codes = directed[:, 0] * n + directed[:, 1]
    if np.unique(codes).size != codes.size:
        raise MeshTopologyError("a directed edge appears twice; inconsistent orientation")
    reverse = directed[:, 1] * n + directed[:, 0]
    if not np.all(np.isin(reverse, codes)):
        raise MeshTopologyError("an edge has no opposite partner; surface not closed")


def triangle_areas_normals(mesh: TriangleMesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-triangle areas and unit normals (orientation as stored)."""
    p = mesh.vertices[mesh.triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    doubled = np.linalg.norm(cross, axis=1)
    areas = 0.5 * doubled
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = cross / doubled[:, None]
    return areas, normals


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted vertex normals, unit length."""
    areas, normals = triangle_areas_normals(mesh)
    acc = np.zeros_like(mesh.vertices)
    w = normals * areas[:, None]
    for k in range(3):
        np.add.at(acc, mesh.triangles[:, k], w)
    acc /= np.linalg.norm(acc, axis=1)[:, None]
    return acc


def mesh_stats(mesh: TriangleMesh) -> MeshStats:
    """Area, enclosed volume (divergence theorem) and longest edge.

    Raises :class:`MeshTopologyError` for non-watertight input.
    """
    validate_closed(mesh)
    areas, normals = triangle_areas_normals(mesh)
    if np.any(areas <= 0) or not np.all(np.isfinite(normals)):
        raise MeshTopologyError("mesh contains a degenerate triangle")
    p = mesh.vertices[mesh.triangles]
    centroids = p.mean(axis=1)
    volume = np.sum(np.einsum("ij,ij->i", centroids, normals) * areas) / 3.0
    e = edges_of(mesh.triangles)
    h_max = float(np.max(np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)))
    return MeshStats(
        num_vertices=mesh.num_vertices,
        num_triangles=mesh.num_triangles,
        h_max=h_max,
        total_area=float(np.sum(areas)),
        enclosed_volume=float(volume),
    )


def mesh_checksum(mesh: TriangleMesh) -> str:
    """Stable hex digest of the vertex and connectivity arrays."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.triangles).tobytes())
    return h.hexdigest()
