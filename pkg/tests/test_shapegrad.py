import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acoustic_shape.errors import SupportError
from acoustic_shape.geometry import (
    build_structured_mesh,
    compute_boundary_geometry,
    make_bump_field,
    make_ring_field,
    nodal_field,
)
from acoustic_shape.shapegrad import (
    BoundaryDensity,
    ShapeProblem,
    _adjoint_normal_derivative,
    _arc_derivative,
    lemma_identity_residual,
    lift_density,
    shape_derivative,
    shape_derivative_volume,
    shape_gradient_density,
    taylor_test,
)
from acoustic_shape.state import ModelParams, solve_state
from acoustic_shape.adjoint import adjoint_data, solve_adjoint


@pytest.fixture(scope="module")
def small_grad(request):
    p = request.getfixturevalue("small_problem")
    prob = ShapeProblem(p["mesh"], p["params"], p["g"], p["spec"], p["T"], p["N"])
    sol, adj, dens = prob.gradient()
    return prob, sol, adj, dens


def test_unit_density_pairs_to_polygon_perimeter():
    # [DERIVED] closed form: for a regular n-gon inscribed in the unit circle,
    # rho = 1 and h = x give sum(arc_weight * x.n) = 2 n sin(pi / n)
    mesh = build_structured_mesh("disk", 5)
    bg = compute_boundary_geometry(mesh)
    n = len(bg.vertex_ids)
    dens = BoundaryDensity(np.ones(n), bg, np.array([], dtype=np.int64))
    val = shape_derivative(dens, nodal_field(mesh.vertices))
    assert np.isclose(val, 2 * n * np.sin(np.pi / n), rtol=1e-13)


def test_adjoint_normal_derivative_closed_form():
    # [DERIVED] b q' = c^2 q + S with q(T) = 0 and constant S:
    # q(t) = S / c^2 (exp(c^2 (t - T) / b) - 1)
    params = ModelParams(2.0, 0.5, 0.0, 1.0)
    times = np.linspace(0.0, 1.0, 401)
    dp = np.full((len(times), 1), 0.75)
    g = np.full((len(times), 1), 2.0)
    q = _adjoint_normal_derivative(params, times, dp, g)[:, 0]
    S = 2.0 * 1.0 * 0.75 * 2.0
    exact = S / 4.0 * (np.exp(4.0 * (times - 1.0) / 0.5) - 1.0)
    assert np.max(np.abs(q - exact)) < 1e-4
    lin = _adjoint_normal_derivative(ModelParams.linear(1.0, 0.1), times, dp, g)
    assert np.all(lin == 0)


def test_arc_derivative_of_linear_function():
    # on equal spacing the three-point formula reduces to the central difference,
    # which for a linear f is grad f . (mean unit secant)
    mesh = build_structured_mesh("annular_sector", 8, r_inner=0.5, r_outer=1.0)
    bg = compute_boundary_geometry(mesh)
    v = mesh.vertices
    on_outer = np.abs(np.linalg.norm(v, axis=1) - 1.0) < 1e-12
    grad = np.array([3.0, -2.0])
    d = _arc_derivative(bg, mesh, v @ grad)[0]
    rows = on_outer[bg.vertex_ids] & on_outer[bg.prev_vertex] & on_outer[bg.next_vertex]
    t_prev = v[bg.vertex_ids] - v[bg.prev_vertex]
    t_next = v[bg.next_vertex] - v[bg.vertex_ids]
    sec = 0.5 * (t_prev / np.linalg.norm(t_prev, axis=1)[:, None]
                 + t_next / np.linalg.norm(t_next, axis=1)[:, None])
    assert rows.sum() > 3
    assert np.allclose(d[rows], (sec @ grad)[rows], atol=1e-12)


def test_density_zero_when_adjoint_zero(small_problem):
    p = small_problem
    V, prm = p["space"], p["params"]
    sol = solve_state(V, prm, p["g"], T=p["T"], N=p["N"])
    spec = dataclasses.replace(p["spec"], target=sol.psi.copy())
    adj = solve_adjoint(V, prm, sol, adjoint_data(spec, sol, prm, V))
    bg = compute_boundary_geometry(p["mesh"])
    for mode in ("trace", "one_sided"):
        assert np.all(shape_gradient_density(sol, adj, p["g"], prm, bg, V, mode).values == 0)


def test_density_rejects_bad_mode(small_grad):
    prob, sol, adj, dens = small_grad
    with pytest.raises(ValueError):
        shape_gradient_density(sol, adj, prob.excitation, prob.params, dens.geometry, prob.space, "x")


def test_tangential_field_has_zero_derivative(small_grad):
    prob, sol, adj, dens = small_grad
    swirl = make_ring_field(prob.mesh, r_inner=0.5, r_outer=1.4, radial=0.0, swirl=1.0)
    assert abs(shape_derivative(dens, swirl)) < 1e-14 * np.abs(dens.values).sum()


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 3))
def test_shape_derivative_linear_in_h(small_grad, a, c, mode):
    prob, sol, adj, dens = small_grad
    h1 = make_ring_field(prob.mesh, r_inner=0.5, r_outer=1.4, radial=1.0, mode=mode, mode_amp=0.5)
    h2 = make_bump_field((1.0, 0.0), 0.5, (0.3, 0.4), prob.mesh)
    lhs = shape_derivative(dens, a * h1 + c * h2)
    rhs = a * shape_derivative(dens, h1) + c * shape_derivative(dens, h2)
    assert np.isclose(lhs, rhs, rtol=1e-12, atol=1e-18)


def test_protected_support_enforced(small_grad):
    prob, sol, adj, dens = small_grad
    inner = make_bump_field((0.0, 0.0), 0.6, (0.1, 0.0), prob.mesh)
    with pytest.raises(SupportError):
        shape_derivative(dens, inner, prob.protected())


def test_volume_form_matches_finite_difference(small_grad):
    # the p1 volume form is the derivative of the discrete transformed problem
    prob, sol, adj, dens = small_grad
    h = make_ring_field(prob.mesh, r_inner=0.6, r_outer=1.4, radial=0.4, mode=2, mode_amp=0.5)
    vol = shape_derivative_volume(prob.space, sol, adj, prob.params, prob.excitation, h)
    eps = 1e-4
    fd = (prob.J(h, eps) - prob.J(h, -eps)) / (2 * eps)
    assert abs(vol - fd) / abs(fd) < 2e-2


def test_lemma_residual_decays():
    res = []
    for n in (4, 8, 16):
        mesh = build_structured_mesh("disk", n)
        h = make_bump_field((0.8, 0.3), 0.6, (0.3, -0.2), mesh)
        res.append(lemma_identity_residual("1 + x", "x**2", "y**2", h, mesh))
    assert res[0] > res[1] > res[2]
    assert res[2] < 1e-3


def test_lift_is_descent_and_respects_protection(small_grad):
    prob, sol, adj, dens = small_grad
    prot = prob.protected()
    h = lift_density(dens, prob.mesh, prot, passes=3, scale=1.0)
    assert np.all(h.values[prot] == 0)
    assert np.isclose(np.max(np.linalg.norm(h.values, axis=1)), 1.0)
    assert shape_derivative(dens, h, prot) < 0


def test_taylor_zero_field_and_validation(small_grad):
    prob = small_grad[0]
    zero = nodal_field(np.zeros((prob.mesh.n_vertices, 2)))
    assert prob.J(zero, 0.1) == prob.J()
    with pytest.raises(ValueError):
        taylor_test(prob, zero, (0.1, 0.2, 0.05, 0.01))
    with pytest.raises(ValueError):
        taylor_test(prob, zero, (0.1, 0.05))
