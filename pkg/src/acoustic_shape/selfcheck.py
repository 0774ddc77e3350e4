"""Built-in invariant suite behind ``acoustic-shape check``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import POTENTIAL_TRACKING, CostFunctionalSpec, adjoint_data, amplitude_gradient, \
    evaluate_cost, focal_indicator, solve_adjoint
from .discretize import FeSpace
from .geometry import build_structured_mesh, compute_boundary_geometry, make_bump_field
from .shapegrad import lemma_identity_residual
from .state import BoundaryExcitation, GaussianSpot, ModelParams, RampedSine, solve_state
from .transform import eval_transform, m_prime_from_jacobian, field_jacobian


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def check_transform(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    mesh = build_structured_mesh("disk", 6)
    h = make_bump_field((0.3, -0.2), 0.9, (0.4, 0.25), mesh)
    pts = rng.uniform(-0.6, 0.6, size=(100, 2))
    ang = rng.uniform(0, 2 * np.pi, 100)
    nrm = np.column_stack([np.cos(ang), np.sin(ang)])
    t0 = eval_transform(h, 0.0, pts, nrm)
    err0 = max(np.max(np.abs(t0.det_I - 1)), np.max(np.abs(t0.A - np.eye(2))),
               np.max(np.abs(t0.M - np.eye(2))), np.max(np.abs(t0.w - 1)))
    eps = 1e-6
    tp, tm = eval_transform(h, eps, pts, nrm), eval_transform(h, -eps, pts, nrm)
    jac = field_jacobian(h, pts)
    div = jac[:, 0, 0] + jac[:, 1, 1]
    dw = div - np.einsum("qi,qij,qj->q", nrm, jac, nrm)
    e1 = np.max(np.abs((tp.det_I - tm.det_I) / (2 * eps) - div))
    e2 = np.max(np.abs((tp.w - tm.w) / (2 * eps) - dw))
    e3 = np.max(np.abs((tp.M - tm.M) / (2 * eps) - m_prime_from_jacobian(jac)))
    ok = err0 <= 1e-12 and max(e1, e2, e3) <= 1e-5
    return CheckResult("transform identities", ok,
                       f"d=0 error {err0:.1e}, derivative errors {e1:.1e}/{e2:.1e}/{e3:.1e}")


def check_curvature() -> CheckResult:
    bg = compute_boundary_geometry(build_structured_mesh("disk", 20, radius=2.0))
    err = float(np.max(np.abs(bg.curvature - 0.5)))
    return CheckResult("disk curvature", err < 1e-3, f"max |kappa - 1/R| = {err:.2e}")


def check_lemma() -> CheckResult:
    res = []
    for n in (4, 8, 16):
        mesh = build_structured_mesh("disk", n)
        h = make_bump_field((0.8, 0.3), 0.6, (0.3, -0.2), mesh)
        res.append(lemma_identity_residual("1 + x", "x**2", "y**2", h, mesh))
    ok = res[0] > res[1] > res[2]
    return CheckResult("integration-by-parts identity", ok,
                       "residuals " + ", ".join(f"{r:.2e}" for r in res))


def check_duality() -> CheckResult:
    mesh = build_structured_mesh("disk", 6)
    space = FeSpace(mesh)
    params = ModelParams.linear(1.0, 0.3)
    g = BoundaryExcitation(GaussianSpot((-1.0, 0.0), 0.6), RampedSine(0.05, 1.0))
    fv, chi = focal_indicator(mesh, (0.0, 0.0), 0.3)
    N = 100
    spec = CostFunctionalSpec(POTENTIAL_TRACKING, fv, chi, (0.0, 1.5), target=np.full((N + 1, mesh.n_vertices), 0.01))
    sol = solve_state(space, params, g, T=1.5, N=N)
    adj = solve_adjoint(space, params, sol, adjoint_data(spec, sol, params, space))
    dA = amplitude_gradient(space, params, g, adj)
    eps = 1e-3
    jp = evaluate_cost(solve_state(space, params, g.scaled(1 + eps), T=1.5, N=N), spec, space)
    jm = evaluate_cost(solve_state(space, params, g.scaled(1 - eps), T=1.5, N=N), spec, space)
    fd = (jp - jm) / (2 * eps * g.signal.amplitude)
    rel = abs(dA - fd) / abs(fd)
    return CheckResult("adjoint duality", rel <= 1e-3, f"relative error {rel:.2e}")


def run_checks(seed: int = 0):
    return [check_transform(seed), check_curvature(), check_lemma(), check_duality()]
