import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from acoustic_shape.errors import DeformationTooLarge
from acoustic_shape.geometry import build_structured_mesh, make_bump_field, make_ring_field
from acoustic_shape.transform import (
    eval_M_prime,
    eval_transform,
    field_jacobian,
    m_prime_from_jacobian,
    pushforward_compose,
    transform_derivatives_at_zero,
)
from acoustic_shape.transform import _coefficients


@pytest.fixture(scope="module")
def setup():
    mesh = build_structured_mesh("disk", 6)
    h = make_bump_field((0.4, 0.1), 0.8, (0.3, -0.5), mesh)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.7, 0.7, (60, 2))
    ang = rng.uniform(0, 2 * np.pi, 60)
    return mesh, h, pts, np.column_stack([np.cos(ang), np.sin(ang)])


def test_identity_at_zero(setup):
    mesh, h, pts, nrm = setup
    t = eval_transform(h, 0.0, pts, nrm)
    assert np.allclose(t.det_I, 1, atol=1e-14)
    assert np.allclose(t.A, np.eye(2), atol=1e-14)
    assert np.allclose(t.M, np.eye(2), atol=1e-14)
    assert np.allclose(t.w, 1, atol=1e-14)
    assert np.allclose(t.F, pts)


def test_derivatives_match_fd(setup):
    mesh, h, pts, nrm = setup
    eps = 1e-6
    tp, tm = eval_transform(h, eps, pts, nrm), eval_transform(h, -eps, pts, nrm)
    der = transform_derivatives_at_zero(h, pts, nrm)
    assert np.allclose((tp.det_I - tm.det_I) / (2 * eps), der["dI"], atol=1e-8)
    assert np.allclose((tp.w - tm.w) / (2 * eps), der["dw"], atol=1e-8)
    dAT = np.swapaxes(tp.A - tm.A, 1, 2) / (2 * eps)
    assert np.allclose(dAT, der["dA_T"], atol=1e-8)
    assert np.allclose((tp.M - tm.M) / (2 * eps), eval_M_prime(h, pts).Mp, atol=1e-8)


def test_p1_mode_uses_element_gradients(setup):
    mesh, h, pts, _ = setup
    jp1 = field_jacobian(h, pts, mesh, mode="p1")
    jan = field_jacobian(h, pts, mesh, mode="analytic")
    # the P1 gradient is a first-order approximation of the analytic one
    assert not np.allclose(jp1, jan)
    finer = build_structured_mesh("disk", 12)
    hf = make_bump_field((0.4, 0.1), 0.8, (0.3, -0.5), finer)
    assert np.max(np.abs(field_jacobian(hf, pts, finer, mode="p1") - jan)) < np.max(np.abs(jp1 - jan))


def test_too_large_deformation_raises(setup):
    mesh, h, pts, _ = setup
    with pytest.raises(DeformationTooLarge):
        eval_transform(h, 50.0, pts)


def test_pushforward_moves_vertices_and_keeps_values():
    mesh = build_structured_mesh("disk", 5)
    h = make_ring_field(mesh, radial=1.0, r_inner=0.5, r_outer=1.4)
    vals = np.arange(mesh.n_vertices, dtype=float)
    moved, out = pushforward_compose(vals, h, 0.1, mesh)
    assert np.array_equal(out, vals)
    assert np.allclose(moved.vertices, mesh.vertices + 0.1 * h.values)
    with pytest.raises(DeformationTooLarge):
        pushforward_compose(vals, h, -20.0, mesh)


small = st.floats(-0.3, 0.3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 2), elements=small), st.floats(0.0, 1.0))
def test_coefficients_properties(jac, d):
    jac = jac[None]
    n = np.array([[0.6, 0.8]])
    t = _coefficients(d, np.zeros((1, 2)), np.zeros((1, 2)), jac, n)
    DF = np.eye(2) + d * jac[0]
    assert np.isclose(t.det_I[0], np.linalg.det(DF))
    assert np.allclose(t.M[0], t.M[0].T)
    assert np.allclose(t.M[0], np.linalg.det(DF) * np.linalg.inv(DF) @ np.linalg.inv(DF).T)
    assert np.isclose(t.w[0], np.linalg.det(DF) * np.linalg.norm(np.linalg.inv(DF).T @ n[0]))
    assert np.all(np.linalg.eigvalsh(t.M[0]) > 0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 2), elements=small), arrays(np.float64, (2, 2), elements=small), st.floats(-3, 3))
def test_m_prime_linear_symmetric_traceless_part(j1, j2, a):
    M1 = m_prime_from_jacobian(j1[None])[0]
    M2 = m_prime_from_jacobian(j2[None])[0]
    M12 = m_prime_from_jacobian((a * j1 + j2)[None])[0]
    assert np.allclose(M12, a * M1 + M2)
    assert np.allclose(M1, M1.T)
    # trace of I div h - Jh - Jh^T in 2D is zero
    assert abs(np.trace(M1)) < 1e-12
