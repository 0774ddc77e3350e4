import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acoustic_shape.adjoint import (
    FINAL_TIME,
    POTENTIAL_TRACKING,
    PRESSURE_TRACKING,
    CostFunctionalSpec,
    adjoint_data,
    amplitude_gradient,
    evaluate_cost,
    focal_indicator,
    solve_adjoint,
    time_reverse,
)
from acoustic_shape.state import ModelParams, solve_state


def _duality(prob, spec, params=None, eps=1e-3):
    V, g, T, N = prob["space"], prob["g"], prob["T"], prob["N"]
    params = params or prob["params"]
    sol = solve_state(V, params, g, T=T, N=N)
    adj = solve_adjoint(V, params, sol, adjoint_data(spec, sol, params, V))
    dA = amplitude_gradient(V, params, g, adj)
    jp = evaluate_cost(solve_state(V, params, g.scaled(1 + eps), T=T, N=N), spec, V)
    jm = evaluate_cost(solve_state(V, params, g.scaled(1 - eps), T=T, N=N), spec, V)
    fd = (jp - jm) / (2 * eps * g.signal.amplitude)
    return dA, fd


def test_time_reverse():
    a = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(time_reverse(a), a[::-1])
    assert np.array_equal(time_reverse(a, odd=True), -a[::-1])


def test_focal_indicator_range(small_disk):
    fv, chi = focal_indicator(small_disk, (0.0, 0.0), 0.3)
    assert np.all(chi[fv] == 1) and chi.min() == 0 and chi.max() == 1
    assert np.all((chi > 0) & (chi < 1) == ((chi > 0) & ~np.isin(np.arange(len(chi)), fv)))


def test_spec_validation(small_disk):
    fv, chi = focal_indicator(small_disk, (0.0, 0.0), 0.3)
    with pytest.raises(ValueError):
        CostFunctionalSpec("bogus", fv, chi)
    with pytest.raises(ValueError):
        CostFunctionalSpec(POTENTIAL_TRACKING, fv, chi, (1.0, 0.5))
    with pytest.raises(ValueError):
        CostFunctionalSpec(POTENTIAL_TRACKING, fv, 2 * chi)
    with pytest.raises(ValueError):
        CostFunctionalSpec(FINAL_TIME, fv, chi, terminal="exact")
    near_edge = focal_indicator(small_disk, (0.95, 0.0), 0.2)
    with pytest.raises(ValueError):
        CostFunctionalSpec(POTENTIAL_TRACKING, *near_edge).check_mesh(small_disk)


def test_cost_vanishes_on_own_trajectory(small_problem):
    p = small_problem
    sol = solve_state(p["space"], p["params"], p["g"], T=p["T"], N=p["N"])
    spec = dataclasses.replace(p["spec"], target=sol.psi.copy())
    assert evaluate_cost(sol, spec, p["space"]) == 0.0
    data = adjoint_data(spec, sol, p["params"], p["space"])
    adj = solve_adjoint(p["space"], p["params"], sol, data)
    assert np.all(adj.p == 0)


def test_final_time_cost_formula(small_problem):
    p = small_problem
    V = p["space"]
    sol = solve_state(V, p["params"], p["g"], T=p["T"], N=p["N"])
    spec = CostFunctionalSpec(FINAL_TIME, p["spec"].focal_vertices, p["spec"].chi, (0.0, p["T"]))
    e = sol.psi[-1]
    from acoustic_shape.discretize import assemble_weighted_mass
    assert np.isclose(evaluate_cost(sol, spec, V), 0.5 * e @ assemble_weighted_mass(V, p["spec"].chi) @ e)


def test_adjoint_linear_in_data(small_problem):
    p = small_problem
    V, prm = p["space"], p["params"]
    sol = solve_state(V, prm, p["g"], T=p["T"], N=p["N"])
    d1 = adjoint_data(p["spec"], sol, prm, V)
    spec2 = CostFunctionalSpec(FINAL_TIME, p["spec"].focal_vertices, p["spec"].chi, (0.0, p["T"]))
    d2 = adjoint_data(spec2, sol, prm, V)
    a1 = solve_adjoint(V, prm, sol, d1)
    a2 = solve_adjoint(V, prm, sol, d2)
    a12 = solve_adjoint(V, prm, sol, 2.0 * d1 + d2)
    assert np.allclose(a12.p, 2 * a1.p + a2.p, atol=1e-12 * np.abs(a12.p).max())


def test_duality_potential_tracking_converges_in_dt(small_problem):
    # the adjoint is the continuous one discretised, so the gap is O(dt^2)
    errs = []
    for N in (80, 160):
        p = dict(small_problem, N=N)
        tgt = np.full((N + 1, p["mesh"].n_vertices), 0.01)
        dA, fd = _duality(p, dataclasses.replace(p["spec"], target=tgt))
        errs.append(abs(dA - fd) / abs(fd))
    assert errs[0] < 3e-3 and errs[1] < 0.5 * errs[0]


@pytest.mark.parametrize("variant", [FINAL_TIME, PRESSURE_TRACKING])
def test_duality_other_variants(small_problem, variant):
    p = small_problem
    n = p["mesh"].n_vertices
    tgt = np.full(n, 0.01) if variant == FINAL_TIME else np.zeros((p["N"] + 1, n))
    spec = CostFunctionalSpec(variant, p["spec"].focal_vertices, p["spec"].chi, (0.0, p["T"]), target=tgt)
    dA, fd = _duality(p, spec)
    assert abs(dA - fd) / abs(fd) < 3e-2


@settings(max_examples=5, deadline=None)
@given(st.sampled_from(["westervelt", "kuznetsov"]), st.floats(0.005, 0.02))
def test_duality_nonlinear_small_amplitude(small_problem, preset, amp):
    p = dict(small_problem)
    p["g"] = small_problem["g"].scaled(amp / 0.05)
    params = ModelParams.preset(preset, 1.0, 0.3, beta_a=6.0)
    dA, fd = _duality(p, small_problem["spec"], params)
    assert abs(dA - fd) / abs(fd) < 1e-2
