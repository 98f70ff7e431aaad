import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from spheremem.errors import GeometryError, RankDeficiencyError
from spheremem.fem import (
    PointLocator,
    SaddleSystem,
    assemble_mass,
    assemble_stiffness,
    h2_norm,
    laplacian_apply,
    lumped_diagonal,
    point_functional,
    solve_saddle,
    solve_spd,
)
from spheremem.mesh import build_icosphere, mesh_stats


@pytest.fixture(scope="module")
def mesh():
    return build_icosphere(1.0, 3)


def test_mass_total_is_area(mesh):
    M = assemble_mass(mesh)
    ones = np.ones(mesh.num_vertices)
    area = mesh_stats(mesh).total_area
    assert float(ones @ (M @ ones)) == pytest.approx(area, rel=1e-12)
    assert float(lumped_diagonal(mesh).sum()) == pytest.approx(area, rel=1e-12)


def test_lumped_is_row_sum(mesh):
    M = assemble_mass(mesh)
    np.testing.assert_allclose(
        np.asarray(M.sum(axis=1)).ravel(), lumped_diagonal(mesh), rtol=1e-12
    )


def test_mass_positive_definite(mesh):
    M = assemble_mass(mesh)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.standard_normal(mesh.num_vertices)
        assert float(v @ (M @ v)) > 0


def test_stiffness_annihilates_constants(mesh):
    S = assemble_stiffness(mesh)
    res = S @ np.ones(mesh.num_vertices)
    assert np.max(np.abs(res)) < 1e-12


def test_stiffness_symmetric_psd(mesh):
    S = assemble_stiffness(mesh)
    assert abs(S - S.T).max() < 1e-13
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.standard_normal(mesh.num_vertices)
        assert float(v @ (S @ v)) >= -1e-12


def test_dirichlet_energy_of_coordinate(mesh):
    # int |grad nu_3|^2 over the unit sphere = 8 pi / 3 for nu_3 = z.
    S = assemble_stiffness(mesh)
    z = mesh.vertices[:, 2]
    assert float(z @ (S @ z)) == pytest.approx(8 * np.pi / 3, rel=5e-3)


@settings(max_examples=30, deadline=None)
@given(
    coeffs=st.tuples(
        st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)
    ),
    seed=st.integers(0, 1000),
)
def test_point_functional_reproduces_affine(coeffs, seed, mesh):
    # P1 interpolation on a face is exact for functions affine on that face.
    a0, a1, a2, a3 = coeffs
    field = a0 + mesh.vertices @ np.array([a1, a2, a3])
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(3)
    p /= np.linalg.norm(p)
    locator = PointLocator(mesh)
    _, tri, bary = locator.locate(p)
    foot = bary @ mesh.vertices[mesh.triangles[tri]]
    row = locator.row(p)
    assert float((row @ field)[0]) == pytest.approx(
        a0 + foot @ np.array([a1, a2, a3]), rel=1e-10, abs=1e-12
    )


def test_point_functional_partition_of_unity(mesh):
    rng = np.random.default_rng(3)
    for _ in range(10):
        p = rng.standard_normal(3)
        p /= np.linalg.norm(p)
        row = point_functional(mesh, p)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
        assert row.nnz <= 3
        assert np.all(row.data >= -1e-12)


def test_point_functional_far_point_rejected(mesh):
    with pytest.raises(GeometryError):
        point_functional(mesh, np.array([2.0, 0.0, 0.0]))


def test_solve_spd_residual(mesh):
    S = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    A = (S + M).tocsr()
    rng = np.random.default_rng(5)
    b = rng.standard_normal(mesh.num_vertices)
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_saddle_contract(mesh):
    S = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    A = (S + M).tocsr()
    n = mesh.num_vertices
    B = sp.csr_matrix((M @ np.ones(n)).reshape(1, n))
    f = np.sin(mesh.vertices[:, 2] * 3)
    system = SaddleSystem(A=A, B=B, f=f, g=np.zeros(1), row_labels=["mean"])
    x, lam = solve_saddle(system)
    assert abs(float((B @ x)[0])) < 1e-10
    res = A @ x + B.T @ lam - f
    assert np.linalg.norm(res) < 1e-9 * max(1.0, np.linalg.norm(f))


def test_solve_saddle_rank_deficiency_names_rows(mesh):
    S = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    A = (S + M).tocsr()
    n = mesh.num_vertices
    row = sp.csr_matrix((M @ np.ones(n)).reshape(1, n))
    B = sp.vstack([row, 2.0 * row]).tocsr()
    system = SaddleSystem(
        A=A, B=B, f=np.zeros(n), g=np.zeros(2), row_labels=["mean", "mean again"]
    )
    with pytest.raises(RankDeficiencyError) as exc:
        solve_saddle(system)
    assert exc.value.dependent_rows


def test_laplacian_of_coordinate():
    # Delta nu_3 = -2/R^2 nu_3 on the sphere: the reconstruction converges in
    # the (lumped) L2 norm, roughly halving per refinement level.
    errs = []
    for level in (3, 4, 5):
        m = build_icosphere(1.0, level)
        S = assemble_stiffness(m)
        mL = lumped_diagonal(m)
        z = m.vertices[:, 2]
        lap = laplacian_apply(S, mL, z)
        errs.append(np.sqrt(float(mL @ (lap + 2.0 * z) ** 2)))
    assert errs[0] > 1.8 * errs[1] > 1.8 * 1.8 * errs[2]
    assert errs[2] < 2e-2


def test_h2_norm_controls_l2(mesh):
    M = assemble_mass(mesh)
    S = assemble_stiffness(mesh)
    mL = lumped_diagonal(mesh)
    rng = np.random.default_rng(7)
    u = rng.standard_normal(mesh.num_vertices)
    l2 = np.sqrt(float(u @ (M @ u)))
    assert h2_norm(M, S, mL, u) >= l2
    assert h2_norm(M, S, mL, np.zeros(mesh.num_vertices)) == 0.0
