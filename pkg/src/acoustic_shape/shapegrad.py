"""Shape derivative of the tracking objectives.

The boundary form pairs a time-integrated density with the normal component
of the deformation field::

    dJ(h) = sum_x  arc_weight(x) * rho(x) * (h(x) . n(x))

    rho = int_0^T [ d_n(G p) + G p kappa - a psi_tt p - c^2 grad p . grad psi
                    - b grad p . grad psi_t + 2 sigma p grad psi . grad psi_t ] dt

with ``G = c^2 g + b g_t`` and ``a = 1 - 2k psi_t``. The volume form (before
integration by parts) and the Taylor-test harness are the numerical checks of
that formula.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .adjoint import (
    AdjointSolution,
    CostFunctionalSpec,
    _trapezoid_weights,
    adjoint_data,
    evaluate_cost,
    solve_adjoint,
)
from .discretize import _EDGE_S, _TRI_BARY, FeSpace, map_coefficients
from .errors import AcousticShapeError
from .geometry import BoundaryGeometry, DeformationField, Mesh, compute_boundary_geometry, nodal_field
from .state import BoundaryExcitation, ModelParams, StateSolution, solve_state
from .transform import field_jacobian, field_values, m_prime_from_jacobian

__all__ = [
    "BoundaryDensity",
    "ShapeGradient",
    "ShapeProblem",
    "TaylorReport",
    "shape_gradient_density",
    "shape_derivative",
    "shape_gradient",
    "shape_derivative_volume",
    "lemma_identity_residual",
    "taylor_test",
    "lift_density",
]


@dataclass(frozen=True, eq=False)
class BoundaryDensity:
    """Time-integrated density at every boundary vertex (rows follow ``bg.vertex_ids``).

    ``excluded`` lists corner vertices whose curvature is undefined; they
    carry zero density.
    """

    values: np.ndarray
    geometry: BoundaryGeometry
    excluded: np.ndarray
    normal_mode: str = "trace"


@dataclass(frozen=True, eq=False)
class ShapeGradient:
    value: float
    boundary_density: BoundaryDensity


# ---------------------------------------------------------------------------
# boundary density

def _arc_derivative(bg: BoundaryGeometry, mesh: Mesh, nodal):
    """Tangential derivative along the boundary polygon, one row per time step.

    Three-point second-order formula on the (possibly nonuniform) arc-length
    spacing of the neighbouring boundary vertices.
    """
    v = mesh.vertices
    ids, prv, nxt = bg.vertex_ids, bg.prev_vertex, bg.next_vertex
    h1 = np.linalg.norm(v[ids] - v[prv], axis=1)
    h2 = np.linalg.norm(v[nxt] - v[ids], axis=1)
    cm = -h2 / (h1 * (h1 + h2))
    c0 = (h2 - h1) / (h1 * h2)
    cp = h1 / (h2 * (h1 + h2))
    nodal = np.atleast_2d(nodal)
    return cm * nodal[:, prv] + c0 * nodal[:, ids] + cp * nodal[:, nxt]


def _adjacent_gradients(space: FeSpace, bg: BoundaryGeometry, traj):
    """Mean gradient of the two boundary-edge parent elements at each boundary vertex.

    ``traj`` has shape (T, n); the result has shape (T, nb, 2).
    """
    mesh = space.mesh
    tri = mesh.triangles
    grads = space.grads
    be = mesh.boundary_edges
    pos = np.searchsorted(bg.vertex_ids, be)
    parent = mesh.boundary_edge_tri
    # element gradients at every time step for the parent triangles only
    vals = traj[:, tri[parent]]  # (T, nb_edges, 3)
    eg = np.einsum("tek,ekc->tec", vals, grads[parent])
    out = np.zeros((traj.shape[0], len(bg.vertex_ids), 2))
    cnt = np.zeros(len(bg.vertex_ids))
    for col in range(2):
        np.add.at(out, (slice(None), pos[:, col]), eg)
        np.add.at(cnt, pos[:, col], 1.0)
    return out / cnt[None, :, None]


def _adjoint_normal_derivative(params: ModelParams, times, dp_b, g_b):
    """Normal derivative of p on the boundary from its natural boundary condition.

    The weak adjoint form makes ``c^2 q - b q_t + 2 sigma p_t g = 0`` hold on the
    boundary with ``q = d_n p``; ``q(T) = 0`` because the terminal data vanish
    near the boundary. Integrated backwards with the trapezoidal rule.
    """
    c2, b, sigma = params.c ** 2, params.b, params.sigma
    q = np.zeros_like(dp_b)
    if sigma == 0.0:
        return q
    src = 2.0 * sigma * dp_b * g_b
    if b == 0.0:
        return -src / c2
    # b q_t = c^2 q + src, backwards in time from q(T) = 0
    for n in range(len(times) - 2, -1, -1):
        dt = times[n + 1] - times[n]
        rhs = q[n + 1] * (b / dt - 0.5 * c2) - 0.5 * (src[n] + src[n + 1])
        q[n] = rhs / (b / dt + 0.5 * c2)
    return q


def shape_gradient_density(state: StateSolution, adj: AdjointSolution, g: BoundaryExcitation,
                           params: ModelParams, bg: BoundaryGeometry, space: FeSpace,
                           normal_mode: str = "trace") -> BoundaryDensity:
    """Boundary density of the shape derivative at every boundary vertex.

    Parameters
    ----------
    normal_mode : {"trace", "one_sided"}
        ``"trace"`` uses the Neumann data for the normal derivative of psi,
        the adjoint boundary condition for that of p, and three-point arc
        differences of nodal values for tangential derivatives.
        ``"one_sided"`` takes all gradients, including the normal derivative
        of ``G p``, from the boundary elements adjacent to the vertex.

    Returns
    -------
    BoundaryDensity
        Rows ordered like ``bg.vertex_ids``; corner vertices are zeroed and
        listed in ``excluded``.
    """
    if state.psi.shape != adj.p.shape or not np.array_equal(state.time_grid, adj.time_grid):
        raise ValueError("state and adjoint must share the time grid and mesh")
    if normal_mode not in ("trace", "one_sided"):
        raise ValueError(f"unknown normal_mode {normal_mode!r}")
    mesh = space.mesh
    times = state.time_grid
    ids = bg.vertex_ids
    x = mesh.vertices[ids]
    nrm = bg.outward_normal
    c2, b, k, sigma = params.c ** 2, params.b, params.k, params.sigma

    s = np.array([g.signal.value(t) for t in times])
    s1 = np.array([g.signal.d1(t) for t in times])
    prof = g.profile.value(x)
    dn_prof = np.einsum("ij,ij->i", g.profile.gradient(x), nrm)
    G = (c2 * s + b * s1)[:, None] * prof[None, :]
    dnG = (c2 * s + b * s1)[:, None] * dn_prof[None, :]

    p = adj.p[:, ids]
    a = 1.0 - 2.0 * k * state.dpsi[:, ids]
    mass_term = a * state.ddpsi[:, ids] * p

    if normal_mode == "trace":
        g_b = s[:, None] * prof[None, :]
        gt_b = s1[:, None] * prof[None, :]
        q = _adjoint_normal_derivative(params, times, adj.dp[:, ids], g_b)
        tp = _arc_derivative(bg, mesh, adj.p)
        tpsi = _arc_derivative(bg, mesh, state.psi)
        tdpsi = _arc_derivative(bg, mesh, state.dpsi)
        gp_psi = q * g_b + tp * tpsi
        gp_dpsi = q * gt_b + tp * tdpsi
        gpsi_dpsi = g_b * gt_b + tpsi * tdpsi
        dn_Gp = dnG * p + G * q
    else:
        gp = _adjacent_gradients(space, bg, adj.p)
        gpsi = _adjacent_gradients(space, bg, state.psi)
        gdpsi = _adjacent_gradients(space, bg, state.dpsi)
        gp_psi = np.einsum("tic,tic->ti", gp, gpsi)
        gp_dpsi = np.einsum("tic,tic->ti", gp, gdpsi)
        gpsi_dpsi = np.einsum("tic,tic->ti", gpsi, gdpsi)
        # n . grad of the P1 interpolant of G p on the adjacent elements
        Gnodal = (c2 * s + b * s1)[:, None] * g.profile.value(mesh.vertices)[None, :]
        gGp = _adjacent_gradients(space, bg, Gnodal * adj.p)
        dn_Gp = np.einsum("tic,ic->ti", gGp, nrm)

    integrand = (dn_Gp + G * p * bg.curvature[None, :] - mass_term
                 - c2 * gp_psi - b * gp_dpsi + 2.0 * sigma * p * gpsi_dpsi)
    rho = _trapezoid_weights(times) @ integrand
    corner = np.asarray(bg.is_corner, dtype=bool)
    rho = np.where(corner, 0.0, rho)
    return BoundaryDensity(rho, bg, ids[corner], normal_mode)


def _check_support(h: DeformationField, protected):
    if protected is not None:
        h.check_vanishes_on(protected, "focal/protected region")


def shape_derivative(density: BoundaryDensity, h: DeformationField, protected=None) -> float:
    """Pair the density with the normal trace of h at the boundary vertices."""
    _check_support(h, protected)
    bg = density.geometry
    hn = np.einsum("ij,ij->i", h.values[bg.vertex_ids], bg.outward_normal)
    return float(np.sum(bg.arc_weight * density.values * hn))


def shape_gradient(state, adj, g, params, bg, space, h, protected=None,
                   normal_mode: str = "trace") -> ShapeGradient:
    dens = shape_gradient_density(state, adj, g, params, bg, space, normal_mode)
    return ShapeGradient(shape_derivative(dens, h, protected), dens)


# ---------------------------------------------------------------------------
# volume form

def shape_derivative_volume(space: FeSpace, state: StateSolution, adj: AdjointSolution,
                            params: ModelParams, g: BoundaryExcitation, h: DeformationField,
                            mode: str = "p1", protected=None) -> float:
    """Volume representation of the shape derivative.

    ``-int int div h a psi_tt p - int int (c^2 Mp grad p . grad psi
    + b Mp grad p . grad psi_t - 2 sigma (Mp grad psi_t . grad psi) p) + III``
    where III is the d-derivative of the mapped Neumann load,
    ``int int (dw G + grad G . h) p`` on the boundary. With ``mode="p1"`` the
    Jacobian of h is the element-wise gradient of its P1 interpolant, which is
    the derivative of the discrete transformed problem.
    """
    _check_support(h, protected)
    mesh = space.mesh
    times = state.time_grid
    c2, b, k, sigma = params.c ** 2, params.b, params.k, params.sigma
    wt = _trapezoid_weights(times)

    m, nq = space.qweights.shape
    pts = space.qpoints.reshape(-1, 2)
    jac = field_jacobian(h, pts, mesh, space.qelements, mode).reshape(m, nq, 2, 2)
    div = jac[..., 0, 0] + jac[..., 1, 1]
    Mp = m_prime_from_jacobian(jac.reshape(-1, 2, 2)).reshape(m, nq, 2, 2)
    qw = space.qweights

    # mass-type term, time-vectorised over quadrature values
    tri = mesh.triangles

    def quad(traj):
        return np.einsum("tmk,qk->tmq", traj[:, tri], _TRI_BARY)

    a = 1.0 - 2.0 * k * quad(state.dpsi)
    term_mass = np.einsum("tmq,mq->t", a * quad(state.ddpsi) * quad(adj.p), qw * div)

    def egrad(traj):
        return np.einsum("tmk,mkc->tmc", traj[:, tri], space.grads)

    gp, gpsi, gdpsi = egrad(adj.p), egrad(state.psi), egrad(state.dpsi)
    Mbar = np.einsum("mq,mqij->mij", qw, Mp)  # gradients are constant per element
    term_stiff = np.einsum("tmi,mij,tmj->t", gp, Mbar, c2 * gpsi + b * gdpsi)
    term_conv = 0.0
    if sigma != 0.0:
        MqW = qw[..., None, None] * Mp
        flux = np.einsum("mqij,tmj->tmqi", MqW, gdpsi)
        term_conv = np.einsum("tmqi,tmi,tmq->t", flux, gpsi, quad(adj.p))

    # boundary term III
    nb, qb = space.bqweights.shape
    bpts = space.bqpoints.reshape(-1, 2)
    belems = np.repeat(mesh.boundary_edge_tri, qb)
    bbary = space._edge_bary_in_parent.reshape(-1, 3)
    bjac = field_jacobian(h, bpts, mesh, belems, mode)
    hval = field_values(h, bpts, mesh, belems, bbary, mode)
    nrm = np.repeat(space.edge_normals, qb, axis=0)
    dw = bjac[:, 0, 0] + bjac[:, 1, 1] - np.einsum("qi,qij,qj->q", nrm, bjac, nrm)
    prof = g.profile.value(bpts)
    gh = np.einsum("qi,qi->q", g.profile.gradient(bpts), hval)
    spatial = ((dw * prof + gh).reshape(nb, qb)) * space.bqweights
    pb = np.einsum("te,s->tes", adj.p[:, space.edge_vertices[:, 0]], 1.0 - _EDGE_S) + \
        np.einsum("te,s->tes", adj.p[:, space.edge_vertices[:, 1]], _EDGE_S)
    s = np.array([c2 * g.signal.value(t) + b * g.signal.d1(t) for t in times])
    term_bnd = s * np.einsum("tes,es->t", pb, spatial)

    per_step = -term_mass - term_stiff + 2.0 * sigma * term_conv + term_bnd
    return float(wt @ per_step)


# ---------------------------------------------------------------------------
# integration-by-parts identity

def _analytic(expr):
    """Value, gradient and Laplacian-type callables of a scalar expression in x, y."""
    import sympy as smp

    x, y = smp.symbols("x y")
    e = smp.sympify(expr)
    ex, ey = smp.diff(e, x), smp.diff(e, y)
    f = smp.lambdify((x, y), e, "numpy")
    fx = smp.lambdify((x, y), ex, "numpy")
    fy = smp.lambdify((x, y), ey, "numpy")

    def val(p):
        return np.broadcast_to(np.asarray(f(p[:, 0], p[:, 1]), dtype=float), (len(p),))

    def grad(p):
        gx = np.broadcast_to(np.asarray(fx(p[:, 0], p[:, 1]), dtype=float), (len(p),))
        gy = np.broadcast_to(np.asarray(fy(p[:, 0], p[:, 1]), dtype=float), (len(p),))
        return np.column_stack([gx, gy])

    return e, val, grad


def _div_a_grad(a_expr, u_expr):
    import sympy as smp

    x, y = smp.symbols("x y")
    e = smp.diff(a_expr * smp.diff(u_expr, x), x) + smp.diff(a_expr * smp.diff(u_expr, y), y)
    f = smp.lambdify((x, y), e, "numpy")
    return lambda p: np.broadcast_to(np.asarray(f(p[:, 0], p[:, 1]), dtype=float), (len(p),))


def lemma_identity_residual(a, u, v, h: DeformationField, mesh: Mesh, mode: str = "auto") -> float:
    """``|LHS - RHS|`` of the integration-by-parts identity behind the boundary form.

    ``a``, ``u`` and ``v`` are expressions in ``x`` and ``y`` (strings or sympy
    objects) so that the second derivatives are exact. Volume integrals use the
    3-point triangle rule, boundary integrals 2-point Gauss on each edge, with
    the edge normals of the polygonal boundary.
    """
    space = FeSpace(mesh)
    a_e, a_v, a_g = _analytic(a)
    u_e, u_v, u_g = _analytic(u)
    v_e, v_v, v_g = _analytic(v)
    div_au = _div_a_grad(a_e, u_e)
    div_av = _div_a_grad(a_e, v_e)

    pts = space.qpoints.reshape(-1, 2)
    w = space.qweights.ravel()
    elems = space.qelements
    jac = field_jacobian(h, pts, mesh, elems, mode)
    hq = field_values(h, pts, mesh, elems, np.tile(_TRI_BARY, (mesh.n_triangles, 1)), mode)
    Mp = m_prime_from_jacobian(jac)
    gu, gv, ga = u_g(pts), v_g(pts), a_g(pts)
    lhs = np.sum(w * a_v(pts) * np.einsum("qi,qij,qj->q", gu, Mp, gv))
    vol = (div_au(pts) * np.einsum("qi,qi->q", hq, gv)
           + div_av(pts) * np.einsum("qi,qi->q", hq, gu)
           - np.einsum("qi,qi->q", gu, gv) * np.einsum("qi,qi->q", hq, ga))
    rhs = np.sum(w * vol)

    nb, qb = space.bqweights.shape
    bpts = space.bqpoints.reshape(-1, 2)
    bw = space.bqweights.ravel()
    belems = np.repeat(mesh.boundary_edge_tri, qb)
    bbary = space._edge_bary_in_parent.reshape(-1, 3)
    hb = field_values(h, bpts, mesh, belems, bbary, mode)
    nrm = np.repeat(space.edge_normals, qb, axis=0)
    gu, gv, ab = u_g(bpts), v_g(bpts), a_v(bpts)
    dnu = np.einsum("qi,qi->q", gu, nrm)
    dnv = np.einsum("qi,qi->q", gv, nrm)
    hgv = np.einsum("qi,qi->q", hb, gv)
    hgu = np.einsum("qi,qi->q", hb, gu)
    hn = np.einsum("qi,qi->q", hb, nrm)
    bnd = -ab * (dnu * hgv + dnv * hgu) + ab * np.einsum("qi,qi->q", gu, gv) * hn
    rhs += np.sum(bw * bnd)
    return float(abs(lhs - rhs))


# ---------------------------------------------------------------------------
# reference problem wrapper and Taylor test

@dataclass(eq=False)
class ShapeProblem:
    """Everything needed to evaluate J on a mesh and on its transformed versions."""

    mesh: Mesh
    params: ModelParams
    excitation: BoundaryExcitation
    cost: CostFunctionalSpec
    T: float
    N: int
    tol: float = 1e-12
    max_iter: int = 25
    transform_mode: str = "p1"
    normal_mode: str = "trace"
    space: FeSpace = field(init=False, repr=False)

    def __post_init__(self):
        self.space = FeSpace(self.mesh)

    def solve(self, mapped=None) -> StateSolution:
        return solve_state(self.space, self.params, self.excitation, transform=mapped,
                           T=self.T, N=self.N, tol=self.tol, max_iter=self.max_iter)

    def cost_value(self, sol: StateSolution, mapped=None) -> float:
        det_I = None if mapped is None else mapped.det_I
        return evaluate_cost(sol, self.cost, self.space, det_I)

    def J(self, h: Optional[DeformationField] = None, d: float = 0.0) -> float:
        if h is None or d == 0.0:
            return self.cost_value(self.solve())
        mapped = map_coefficients(self.space, h, d, self.transform_mode)
        return self.cost_value(self.solve(mapped), mapped)

    def adjoint(self, sol: StateSolution) -> AdjointSolution:
        data = adjoint_data(self.cost, sol, self.params, self.space)
        return solve_adjoint(self.space, self.params, sol, data, self.excitation)

    def protected(self):
        return self.cost.protected_vertices(self.mesh)

    def gradient(self, sol: Optional[StateSolution] = None):
        """State, adjoint and boundary density at the current mesh."""
        sol = self.solve() if sol is None else sol
        adj = self.adjoint(sol)
        bg = compute_boundary_geometry(self.mesh)
        dens = shape_gradient_density(sol, adj, self.excitation, self.params, bg, self.space,
                                      self.normal_mode)
        return sol, adj, dens


@dataclass(frozen=True, eq=False)
class TaylorReport:
    J0: float
    dJ: float
    d_values: np.ndarray
    J_values: np.ndarray
    remainders: np.ndarray
    orders: np.ndarray
    gaps: np.ndarray
    fitted_order: float
    monotone: bool

    def summary(self) -> str:
        return (f"J0={self.J0:.6e} dJ={self.dJ:.6e} gap(d_min)={self.gaps[-1]:.3e} "
                f"order(last3)={self.fitted_order:.3f} monotone={self.monotone}")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["d", "J", "remainder", "order", "gap"])
            for i, d in enumerate(self.d_values):
                order = "" if i == 0 else repr(float(self.orders[i - 1]))
                wr.writerow([repr(float(d)), repr(float(self.J_values[i])),
                             repr(float(self.remainders[i])), order, repr(float(self.gaps[i]))])


def taylor_test(problem: ShapeProblem, h: DeformationField,
                d_values: Sequence[float] = (1e-1, 5e-2, 2.5e-2, 1.25e-2),
                dJ: Optional[float] = None, noise_floor: float = 1e3) -> TaylorReport:
    """Compare the boundary-form dJ with finite differences of J along h.

    The remainder is ``r(d) = |J(Omega_d) - J0 - d dJ|``; orders are log-ratio
    slopes between consecutive d, and ``fitted_order`` is the least-squares
    slope over the last three. d values whose increment ``|J_d - J0|`` falls
    below ``noise_floor * tol`` are dropped.
    """
    d_values = np.asarray(d_values, dtype=float)
    if len(d_values) < 4 or np.any(np.diff(d_values) >= 0) or np.any(d_values <= 0):
        raise ValueError("need at least 4 strictly decreasing positive d values")
    sol = problem.solve()
    J0 = problem.cost_value(sol)
    if dJ is None:
        _, _, dens = problem.gradient(sol)
        dJ = shape_derivative(dens, h, problem.protected())
    Js, kept = [], []
    for d in d_values:
        Jd = problem.J(h, float(d))
        if kept and abs(Jd - J0) < noise_floor * problem.tol:
            break
        Js.append(Jd)
        kept.append(d)
    d_arr = np.array(kept)
    J_arr = np.array(Js)
    rem = np.abs(J_arr - J0 - d_arr * dJ)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(rem[:-1] / rem[1:]) / np.log(d_arr[:-1] / d_arr[1:])
        gaps = np.abs((J_arr - J0) / d_arr - dJ) / abs(dJ) if dJ != 0 else np.full(len(d_arr), np.nan)
    tail = slice(max(0, len(d_arr) - 3), len(d_arr))
    ok = rem[tail] > 0
    if ok.sum() >= 2:
        fitted = float(np.polyfit(np.log(d_arr[tail][ok]), np.log(rem[tail][ok]), 1)[0])
    else:
        fitted = math.nan
    monotone = bool(np.all(np.diff(rem) < 0))
    return TaylorReport(J0, float(dJ), d_arr, J_arr, rem, orders, gaps, fitted, monotone)


# ---------------------------------------------------------------------------
# descent direction

def _smooth_boundary(values, bg: BoundaryGeometry, passes: int):
    pos_prev = np.searchsorted(bg.vertex_ids, bg.prev_vertex)
    pos_next = np.searchsorted(bg.vertex_ids, bg.next_vertex)
    out = np.asarray(values, dtype=float).copy()
    for _ in range(passes):
        out = (out[pos_prev] + out + out[pos_next]) / 3.0
    return out


def lift_density(density: BoundaryDensity, mesh: Mesh, protected=(), passes: int = 3,
                 scale: Optional[float] = None) -> DeformationField:
    """Descent field ``-smoothed(rho) n`` extended harmonically into the domain.

    The extension solves a discrete Laplace problem for each component with the
    boundary values prescribed and zero values on the protected vertices. With
    ``scale`` given, the field is normalised to that maximum norm.
    """
    bg = density.geometry
    s = _smooth_boundary(density.values, bg, passes)
    s = np.where(bg.is_corner, 0.0, s)
    bvals = -s[:, None] * bg.outward_normal
    n = mesh.n_vertices
    fixed = np.zeros(n, dtype=bool)
    fixed[bg.vertex_ids] = True
    protected = np.asarray(protected, dtype=np.int64)
    if np.intersect1d(protected, bg.vertex_ids).size:
        raise AcousticShapeError("protected region touches the boundary")
    fixed[protected] = True
    vals = np.zeros((n, 2))
    vals[bg.vertex_ids] = bvals
    free = np.flatnonzero(~fixed)
    if free.size:
        K = FeSpace(mesh).stiffness.tocsr()
        Kff = K[free][:, free].tocsc()
        Kfc = K[free][:, np.flatnonzero(fixed)]
        lu = spla.splu(Kff)
        for c in range(2):
            vals[free, c] = lu.solve(-(Kfc @ vals[fixed, c]))
    if scale is not None:
        mx = np.max(np.linalg.norm(vals, axis=1))
        if mx > 0:
            vals *= scale / mx
    return nodal_field(vals, "harmonic lift of the boundary density")
