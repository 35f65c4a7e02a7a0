import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumpedtet.assembly import (
    apply_dirichlet,
    assemble_mass,
    assemble_source,
    assemble_stiffness,
    assemble_system,
    dump_system,
    point_evaluation_matrix,
    point_source_vector,
)
from lumpedtet.mesh import TetMesh, build_box_mesh, number_nodes, perturb_mesh
from lumpedtet.tables import BUILTIN_IDS

from conftest import basis

REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def ref_mesh(rho=1.0, c=1.0):
    return TetMesh(REF_TET, [[0, 1, 2, 3]], rho, c)


def jittered_box(n=2, seed=0, **kw):
    return perturb_mesh(build_box_mesh([[0, 1], [0, 1], [0, 1]], n, **kw), 0.2, seed=seed)


# ---------------------------------------------------------------- mass


def test_mass_single_reference_tet_matches_weights():
    b = basis("ml2n15")
    m = ref_mesh()
    num = number_nodes(m, b)
    mass = assemble_mass(m, b, num)
    np.testing.assert_allclose(mass[num.elem_to_global[0]], b.weights, rtol=1e-15)


def test_mass_sum_single_tet(element_id):
    b = basis(element_id)
    m = ref_mesh()
    assert assemble_mass(m, b, number_nodes(m, b)).sum() == pytest.approx(1 / 6, abs=1e-15)


def test_mass_two_unit_tets_shared_vertex():
    apex = 2.0 / 3.0 * np.ones(3)  # reflection of the origin through the slanted face
    s = 6.0 ** (1.0 / 3.0)
    m = TetMesh(s * np.vstack([REF_TET, apex]), [[0, 1, 2, 3], [4, 3, 2, 1]], 1.0, 1.0)
    np.testing.assert_allclose(m.volumes(), 1.0, rtol=1e-14)
    b = basis("ml1")
    num = number_nodes(m, b)
    mass = assemble_mass(m, b, num)
    shared = np.intersect1d(num.elem_to_global[0], num.elem_to_global[1])
    np.testing.assert_allclose(mass[shared], 2 * 6 * (1 / 24), rtol=1e-14)


def test_mass_positive_and_scales_with_rho(element_id):
    b = basis(element_id)
    m = jittered_box(2, rho=1.0)
    num = number_nodes(m, b)
    mass = assemble_mass(m, b, num)
    assert mass.min() > 0
    m3 = TetMesh(m.vertices, m.tets, 3.0, 1.0)
    np.testing.assert_allclose(assemble_mass(m3, b, num), 3 * mass, rtol=1e-14)


# ---------------------------------------------------------------- stiffness


def test_stiffness_annihilates_constants(element_id):
    b = basis(element_id)
    m = jittered_box(2, c=2.5)
    a = assemble_stiffness(m, b, number_nodes(m, b))
    scale = np.abs(a).sum(axis=1).max()
    assert np.abs(a @ np.ones(a.shape[0])).max() <= 1e-10 * scale


def test_stiffness_symmetric(element_id):
    b = basis(element_id)
    m = jittered_box(2)
    a = assemble_stiffness(m, b, number_nodes(m, b))
    assert abs(a - a.T).max() <= 1e-12 * abs(a).max()


def test_p1_stiffness_by_hand():
    b = basis("ml1")
    m = ref_mesh()
    num = number_nodes(m, b)
    a = assemble_stiffness(m, b, num).toarray()
    grads = {0: [-1, -1, -1], 1: [1, 0, 0], 2: [0, 1, 0], 3: [0, 0, 1]}
    g = np.array([grads[int(np.argmin(np.linalg.norm(REF_TET - x, axis=1)))]
                  for x in num.node_coords], dtype=float)
    np.testing.assert_allclose(a, g @ g.T / 6.0, atol=1e-15)


def test_stiffness_scaling_law(element_id):
    b = basis(element_id)
    m = jittered_box(1, seed=3)
    num = number_nodes(m, b)
    a1 = assemble_stiffness(m, b, num)
    a2 = assemble_stiffness(m.scaled(2.0), b, number_nodes(m.scaled(2.0), b))
    np.testing.assert_allclose(a2.toarray(), 2.0 * a1.toarray(), rtol=1e-12, atol=1e-13)


def test_stiffness_positive_semidefinite(element_id):
    b = basis(element_id)
    m = jittered_box(2)
    a = assemble_stiffness(m, b, number_nodes(m, b))
    x = np.random.default_rng(0).standard_normal((a.shape[0], 100))
    q = np.einsum("ij,ij->j", x, a @ x)
    assert q.min() >= -1e-10 * abs(a).max()


def test_ml1_linear_functions_interior_rows_vanish():
    b = basis("ml1")
    m = perturb_mesh(build_box_mesh([[0, 1], [0, 1], [0, 1]], 4), 0.2, seed=8)
    num = number_nodes(m, b)
    a = assemble_stiffness(m, b, num)
    u = num.node_coords @ np.array([1.0, -2.0, 0.5]) + 3.0
    r = a @ u
    interior = np.all((num.node_coords > 1e-12) & (num.node_coords < 1 - 1e-12), axis=1)
    assert interior.sum() == 27
    assert np.abs(r[interior]).max() <= 1e-10 * np.abs(a).max()


def test_polynomial_galerkin_identity(element_id):
    """u^T A v equals the exact Dirichlet form for interpolated polynomials (derived)."""
    b = basis(element_id)
    m = build_box_mesh([[0, 1], [0, 1], [0, 1]], 1)
    num = number_nodes(m, b)
    a = assemble_stiffness(m, b, num)
    x = num.node_coords
    # u = x^p, v = x on the unit cube: int p x^(p-1) dx = 1
    p = b.table.degree
    u, v = x[:, 0] ** p, x[:, 0]
    assert float(u @ (a @ v)) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.sampled_from(BUILTIN_IDS), st.integers(0, 1000))
def test_assembly_order_independent(ident, seed):
    b = basis(ident)
    m = jittered_box(2)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m.n_elements)
    m2 = TetMesh(m.vertices, m.tets[perm], m.rho[perm], m.c[perm])
    num1, num2 = number_nodes(m, b), number_nodes(m2, b)
    s1, s2 = assemble_system(m, b, num1), assemble_system(m2, b, num2)
    # map nodes of the second numbering onto the first by position
    order1 = np.lexsort(np.round(num1.node_coords, 10).T)
    order2 = np.lexsort(np.round(num2.node_coords, 10).T)
    p = np.empty(s1.n, dtype=int)
    p[order2] = order1
    np.testing.assert_allclose(s2.mass_diag, s1.mass_diag[p], rtol=1e-13)
    a1 = s1.stiffness.toarray()[np.ix_(p, p)]
    np.testing.assert_allclose(s2.stiffness.toarray(), a1, rtol=0, atol=1e-13 * np.abs(a1).max())


# ---------------------------------------------------------------- sources


def test_source_zero():
    b = basis("ml2n15")
    m = jittered_box(1)
    num = number_nodes(m, b)
    f = assemble_source(m, b, num, lambda x, t: np.zeros(len(x)), 0.0)
    assert not f.any()


def test_source_constant_single_tet(element_id):
    b = basis(element_id)
    m = ref_mesh()
    num = number_nodes(m, b)
    f = assemble_source(m, b, num, lambda x, t: 1.0, 0.0)
    np.testing.assert_allclose(f[num.elem_to_global[0]], b.weights, rtol=1e-15)
    assert f.sum() == pytest.approx(1 / 6, abs=1e-15)


def test_point_source_at_node():
    b = basis("ml2n15")
    m = build_box_mesh([[0, 1], [0, 1], [0, 1]], 2)
    num = number_nodes(m, b)
    vec, node = point_source_vector(num, [0.5, 0.5, 0.5], amplitude=2.5)
    assert np.count_nonzero(vec) == 1
    assert vec[node] == 2.5
    np.testing.assert_allclose(num.node_coords[node], [0.5, 0.5, 0.5])


def test_point_source_outside():
    b = basis("ml1")
    m = build_box_mesh([[0, 1], [0, 1], [0, 1]], 1)
    with pytest.raises(ValueError):
        point_source_vector(number_nodes(m, b), [1.5, 0.5, 0.5])


def test_point_evaluation_reproduces_polynomials(element_id):
    b = basis(element_id)
    m = jittered_box(2, seed=6)
    num = number_nodes(m, b)
    p = b.table.degree
    poly = lambda x: (x[:, 0] + 2 * x[:, 1] - x[:, 2]) ** p + x[:, 1]  # noqa: E731
    pts = np.random.default_rng(2).uniform(0.05, 0.95, size=(15, 3))
    r = point_evaluation_matrix(m, b, num, pts)
    np.testing.assert_allclose(r @ poly(num.node_coords), poly(pts), atol=1e-11)
    # at a node the row is a unit vector
    r0 = point_evaluation_matrix(m, b, num, num.node_coords[[5]])
    assert r0.nnz == 1 and r0[0, 5] == pytest.approx(1.0)


# ---------------------------------------------------------------- Dirichlet


def test_dirichlet_variants():
    b = basis("ml1")
    m = build_box_mesh([[0, 1], [0, 1], [0, 1]], 1)
    num = number_nodes(m, b)
    s = assemble_system(m, b, num)
    same = apply_dirichlet(s, num)
    np.testing.assert_array_equal(same.interior_mask, s.interior_mask)
    assert same.interior_mask.all()

    one = m.with_dirichlet(lambda c: c[:, 1] > 1 - 1e-12)
    s1 = assemble_system(one, b)
    assert (~s1.interior_mask).sum() == 4
    assert np.all(s1.inv_mass[~s1.interior_mask] == 0)

    tet = ref_mesh().with_dirichlet()
    st_ = assemble_system(tet, b)
    assert not st_.interior_mask.any()


# ---------------------------------------------------------------- energy and dump


def test_energy_is_positive_norm(element_id):
    s = assemble_system(jittered_box(1), basis(element_id))
    rng = np.random.default_rng(1)
    for _ in range(5):
        u0, u1 = rng.standard_normal((2, s.n))
        # symmetric energy form 0.5 v'Mv + 0.5 u0'Au1 is positive for small dt
        assert s.energy(u0, u1, 1e-3) > 0


def test_dump_system(tmp_path):
    s = assemble_system(ref_mesh(), basis("ml1"))
    dump_system(s, tmp_path)
    mass = np.loadtxt(tmp_path / "mass.txt")
    trip = np.loadtxt(tmp_path / "stiffness.txt")
    np.testing.assert_allclose(mass, s.mass_diag)
    assert len(trip) == s.stiffness.nnz
