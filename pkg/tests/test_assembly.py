"""P1 assembly, prolongation exactness, Rayleigh quotients."""

import numpy as np
import pytest

from afemeig import (AssemblyError, CoefficientField, ConfigurationError,
                     LineageError, assemble, build_prolongation, dense_geneig,
                     make_initial_mesh, nvb_refine, rayleigh_quotient,
                     uniform_refine)
from afemeig.assembly import element_matrices
from afemeig.mesh import Mesh

UNIT = CoefficientField({0: 1.0})


def reference_triangle():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(coords, np.ones(3, dtype=bool), np.zeros(3, dtype=np.int32),
                np.full((3, 2), -1, dtype=np.int64), np.array([[0, 1, 2]]),
                np.zeros(1, dtype=np.int8), np.array([-1], dtype=np.int64),
                np.ones(1, dtype=bool), np.zeros(1, dtype=np.int32),
                np.zeros(1, dtype=np.int32), 0)


def test_reference_element_stiffness():
    ke, _ = element_matrices(reference_triangle(), UNIT)
    want = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    np.testing.assert_allclose(ke[0], want, atol=1e-15)


def test_reference_element_mass():
    _, me = element_matrices(reference_triangle(), UNIT)
    want = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    np.testing.assert_allclose(me[0], want, atol=1e-16)


def test_degenerate_triangle_rejected():
    m = reference_triangle()
    bad = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
               m.vertex_boundary, m.birth_level, m.parent_edge, m.tris,
               m.peak_slot, m.tri_parent, m.tri_survivor, m.generation,
               m.region, 0)
    with pytest.raises(AssemblyError):
        assemble(bad, UNIT)


def test_missing_region_rejected():
    with pytest.raises(AssemblyError):
        assemble(make_initial_mesh("fourquadrant", 2), CoefficientField({1: 1.0}))


def test_coefficient_field_validation():
    with pytest.raises(ConfigurationError):
        CoefficientField({0: 0.5})


def test_unit_square_eigenvalue_approximation():
    # h = 1/32: smallest pencil eigenvalue within 0.5% of 2*pi^2, from above
    mesh = make_initial_mesh("square", 32)
    ops = assemble(mesh, UNIT)
    lams, _ = dense_geneig(ops.a.to_dense(), ops.m.to_dense(), 1)
    exact = 2 * np.pi ** 2
    assert lams[0] > exact
    assert abs(lams[0] - exact) / exact < 0.005


def test_full_mass_row_sums_are_star_areas():
    # P1 identity: row sums of the unconstrained mass equal a third of the
    # vertex star area
    mesh = uniform_refine(make_initial_mesh("lshape", 2), 1)
    ops = assemble(mesh, UNIT, dirichlet=False)
    row_sums = ops.m.matvec(np.ones(mesh.n_vertices))
    areas = mesh.signed_areas()
    star = np.zeros(mesh.n_vertices)
    np.add.at(star, mesh.tris.reshape(-1), np.repeat(areas, 3))
    np.testing.assert_allclose(row_sums, star / 3.0, rtol=1e-13)


def test_operators_positive_definite():
    mesh = uniform_refine(make_initial_mesh("crack", 2), 1)
    ops = assemble(mesh, UNIT)
    for mat in (ops.a, ops.m):
        np.linalg.cholesky(mat.to_dense())


def test_rho_scaling_exact():
    mesh = make_initial_mesh("square", 4)
    a1 = assemble(mesh, UNIT).a
    a5 = assemble(mesh, CoefficientField({0: 5.0})).a
    np.testing.assert_array_equal(a5.data, 5.0 * a1.data)


def test_prolongation_noop_is_identity():
    coarse = make_initial_mesh("square", 2)
    fine = nvb_refine(coarse, [])
    p = build_prolongation(coarse, fine).to_dense()
    np.testing.assert_array_equal(p, np.eye(coarse.n_interior))


def test_prolongation_midpoint_weights():
    coarse = uniform_refine(make_initial_mesh("square", 2), 2)
    fine = nvb_refine(coarse, range(coarse.n_triangles))
    p = build_prolongation(coarse, fine)
    dense = p.to_dense()
    for v in fine.interior_vertices:
        row = dense[fine.interior_index[v]]
        if v < coarse.n_vertices:
            assert row.sum() == 1.0 and (row == 1.0).sum() == 1
        else:
            a, b = fine.parent_edge[v]
            if a < coarse.n_vertices and b < coarse.n_vertices \
                    and not fine.vertex_boundary[a] and not fine.vertex_boundary[b]:
                assert sorted(row[row != 0]) == [0.5, 0.5]


def test_prolongation_energy_exact():
    rng = np.random.RandomState(0)
    coarse = uniform_refine(make_initial_mesh("lshape", 2), 1)
    fine = nvb_refine(coarse, rng.choice(coarse.n_triangles, 20, replace=False))
    p = build_prolongation(coarse, fine)
    ops_c = assemble(coarse, UNIT)
    ops_f = assemble(fine, UNIT)
    for _ in range(5):
        v = rng.randn(coarse.n_interior)
        pv = p.apply(v)
        e_c = v @ ops_c.a.matvec(v)
        e_f = pv @ ops_f.a.matvec(pv)
        assert abs(e_c - e_f) <= 1e-12 * abs(e_c)


def test_galerkin_nestedness():
    rng = np.random.RandomState(1)
    coarse = uniform_refine(make_initial_mesh("square", 2), 2)
    fine = nvb_refine(coarse, rng.choice(coarse.n_triangles, 12, replace=False))
    p = build_prolongation(coarse, fine).to_dense()
    ops_c = assemble(coarse, UNIT)
    ops_f = assemble(fine, UNIT)
    for fine_mat, coarse_mat in ((ops_f.a, ops_c.a), (ops_f.m, ops_c.m)):
        want = coarse_mat.to_dense()
        got = p.T @ fine_mat.to_dense() @ p
        assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()


def test_prolongation_lineage_errors():
    a = make_initial_mesh("square", 2)
    b = make_initial_mesh("square", 3)
    with pytest.raises(LineageError):
        build_prolongation(a, b)


def test_rayleigh_quotient_basics():
    mesh = uniform_refine(make_initial_mesh("square", 2), 2)
    ops = assemble(mesh, UNIT)
    lams, vecs = dense_geneig(ops.a.to_dense(), ops.m.to_dense(), 2)
    np.testing.assert_allclose(rayleigh_quotient(ops, vecs[:, 0]), lams[0],
                               rtol=1e-12)
    rng = np.random.RandomState(2)
    u = rng.randn(ops.n)
    rq = rayleigh_quotient(ops, u)
    assert rq >= lams[0] - 1e-12  # discrete minimum
    np.testing.assert_allclose(rayleigh_quotient(ops, 3.7 * u), rq, rtol=1e-14)
    with pytest.raises(ValueError):
        rayleigh_quotient(ops, np.zeros(ops.n))


def test_shared_sparsity_and_shifted_matvec():
    mesh = uniform_refine(make_initial_mesh("square", 2), 1)
    ops = assemble(mesh, UNIT)
    assert ops.a.indptr is ops.m.indptr
    assert ops.a.indices is ops.m.indices
    rng = np.random.RandomState(3)
    x = rng.randn(ops.n)
    lam = 7.3
    want = ops.a.matvec(x) - lam * ops.m.matvec(x)
    got = ops.shifted_matvec(lam, x)
    assert np.abs(got - want).max() <= 1e-12 * np.abs(want).max()
