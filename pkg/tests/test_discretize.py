import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from acoustic_shape.discretize import (
    FeSpace,
    MappedCoefficients,
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_convective,
    assemble_matrix_stiffness,
    assemble_weighted_mass,
    map_coefficients,
)
from acoustic_shape.geometry import build_structured_mesh, make_bump_field
from acoustic_shape.transform import pushforward_compose


@pytest.fixture(scope="module")
def square():
    return FeSpace(build_structured_mesh("unit_square", 6))


@pytest.fixture(scope="module")
def disk():
    return FeSpace(build_structured_mesh("disk", 6))


def test_mass_and_stiffness_basic(square):
    V = square
    one = np.ones(V.dof_count)
    x = V.mesh.vertices[:, 0]
    assert np.isclose(one @ V.mass @ one, 1.0)
    assert np.allclose(V.stiffness @ one, 0.0, atol=1e-12)
    assert np.isclose(x @ V.stiffness @ x, 1.0)
    assert np.allclose((V.mass - V.mass.T).data, 0.0)


def test_quadrature_exact_for_quadratics(square):
    V = square
    x, y = V.qpoints[..., 0], V.qpoints[..., 1]
    # int_0^1 int_0^1 x^2 + x y = 1/3 + 1/4
    assert np.isclose(np.sum(V.qweights * (x ** 2 + x * y)), 7 / 12)
    bx = V.bqpoints[..., 0]
    # perimeter integral of x^3 on the unit square: 1/4 + 1 + 1/4 + 0
    assert np.isclose(np.sum(V.bqweights * bx ** 3), 1.5)


def test_boundary_operators(disk):
    V = disk
    one = np.ones(V.dof_count)
    perim = np.sum(V.edge_lengths)
    assert np.isclose(assemble_boundary_load(V, 1.0, 1.0).sum(), perim)
    B = assemble_boundary_mass(V, 2.0)
    assert np.isclose(one @ B @ one, 2 * perim)
    interior = np.setdiff1d(np.arange(V.dof_count), V.edge_vertices.ravel())
    assert np.all(assemble_boundary_load(V, 1.0, one)[interior] == 0)


def test_convective_linear_field(square):
    V = square
    x = V.mesh.vertices[:, 0]
    C = assemble_convective(V, np.tile([1.0, 0.0], (V.mesh.n_triangles, 1)))
    # int (grad x . e1) phi_i summed over i is the area
    assert np.isclose((C @ x).sum(), 1.0)


def test_matrix_stiffness_rejects_asymmetric(square):
    with pytest.raises(ValueError):
        assemble_matrix_stiffness(square, np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        assemble_weighted_mass(square, np.full(square.dof_count, np.nan))
    with pytest.raises(ValueError):
        assemble_weighted_mass(square, np.ones(3))


def test_identity_coefficients_reproduce_plain_operators(disk):
    V = disk
    ident = MappedCoefficients.identity(V)
    assert np.allclose(assemble_weighted_mass(V, ident.det_I).toarray(), V.mass.toarray())
    assert np.allclose(assemble_matrix_stiffness(V, ident.M).toarray(), V.stiffness.toarray())
    mc = map_coefficients(V, make_bump_field((0.5, 0.0), 0.6, (0.2, 0.0), V.mesh), 0.0)
    assert np.allclose(mc.det_I, 1) and np.allclose(mc.w, 1)


def test_p1_mapping_equals_moved_mesh(disk):
    V = disk
    h = make_bump_field((0.6, 0.2), 0.7, (0.3, -0.2), V.mesh)
    d = 0.3
    mc = map_coefficients(V, h, d, mode="p1")
    moved, _ = pushforward_compose(np.zeros(V.dof_count), h, d, V.mesh)
    W = FeSpace(moved)
    assert np.allclose(assemble_weighted_mass(V, mc.det_I).toarray(), W.mass.toarray(), atol=1e-14)
    assert np.allclose(assemble_matrix_stiffness(V, mc.M).toarray(), W.stiffness.toarray(), atol=1e-12)
    assert np.allclose(assemble_boundary_load(V, mc.w, 1.0), assemble_boundary_load(W, 1.0, 1.0), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 49, elements=st.floats(-2, 2)), arrays(np.float64, 49, elements=st.floats(-2, 2)),
       st.floats(-3, 3))
def test_weighted_mass_linear_in_coefficient(c1, c2, a):
    V = FeSpace(build_structured_mesh("unit_square", 6))
    lhs = assemble_weighted_mass(V, a * c1 + c2).toarray()
    rhs = a * assemble_weighted_mass(V, c1).toarray() + assemble_weighted_mass(V, c2).toarray()
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert np.allclose(lhs, lhs.T)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 49, elements=st.floats(-1, 1)))
def test_l2_norm_matches_mass(u):
    V = FeSpace(build_structured_mesh("unit_square", 6))
    assert np.isclose(V.l2_norm(u) ** 2, u @ V.mass @ u, atol=1e-12)
    assert np.isclose(V.integrate(u), np.ones(49) @ V.mass @ u, atol=1e-12)
