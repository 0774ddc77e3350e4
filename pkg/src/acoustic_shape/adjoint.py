"""Cost functionals and the backward-in-time adjoint solver.

The adjoint of the quasilinear state problem is the linear final-value problem::

    d/dt((1 - 2k dpsi) dp) - c^2 lap p + b lap dp - 2 sigma div(dp grad psi) = f
    p(T) = p_T,  dp(T) = dp_T

posed weakly with ``(c^2 grad p - b grad dp + 2 sigma dp grad psi) . grad phi``,
so the boundary condition is natural. It is solved forward in the reversed
time ``tau = T - t`` with the same Newmark scheme as the state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from .discretize import (
    FeSpace,
    assemble_boundary_load,
    assemble_convective,
    assemble_weighted_mass,
)
from .geometry import Mesh
from .state import BoundaryExcitation, ModelParams, StateSolution, _smoothstep

__all__ = [
    "POTENTIAL_TRACKING",
    "FINAL_TIME",
    "PRESSURE_TRACKING",
    "CostFunctionalSpec",
    "AdjointData",
    "AdjointSolution",
    "focal_indicator",
    "evaluate_cost",
    "adjoint_data",
    "solve_adjoint",
    "time_reverse",
    "amplitude_gradient",
]

POTENTIAL_TRACKING = "potential_tracking"
FINAL_TIME = "final_time"
PRESSURE_TRACKING = "pressure_tracking"
_VARIANTS = (POTENTIAL_TRACKING, FINAL_TIME, PRESSURE_TRACKING)


def focal_indicator(mesh: Mesh, center, radius, smooth: bool = True):
    """Vertices of the disk focal region and its nodal indicator.

    The smooth indicator is one pass of neighbour averaging applied to the
    sharp nodal indicator, spreading the transition over one more element
    layer while keeping values in [0, 1].
    """
    diff = mesh.vertices - np.asarray(center, dtype=float)
    inside = np.hypot(diff[:, 0], diff[:, 1]) <= radius
    focal = np.flatnonzero(inside)
    chi = inside.astype(float)
    if smooth:
        tri = mesh.triangles
        acc = np.zeros(mesh.n_vertices)
        cnt = np.zeros(mesh.n_vertices)
        for i in range(3):
            for j in range(3):
                np.add.at(acc, tri[:, i], chi[tri[:, j]])
                np.add.at(cnt, tri[:, i], 1.0)
        chi = np.where(inside, 1.0, acc / cnt)
    return focal, chi


@dataclass(frozen=True, eq=False)
class CostFunctionalSpec:
    """One of the three objectives with its target data.

    ``target`` is a nodal trajectory ``(N+1, n)`` for the tracking variants
    (``psi_D`` or ``f_D = p_D / rho``) and a nodal field ``(n,)`` for the
    final-time variant; ``None`` means a zero target.
    """

    variant: str
    focal_vertices: np.ndarray
    chi: np.ndarray
    time_window: tuple = (0.0, np.inf)
    window_ramp: float = 0.0
    target: Optional[np.ndarray] = None
    target_rate: Optional[np.ndarray] = None
    terminal: str = "projected"

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown cost variant {self.variant!r}")
        t0, t1 = self.time_window
        if not 0.0 <= t0 < t1:
            raise ValueError("time window must satisfy 0 <= t0 < t1")
        chi = np.asarray(self.chi, dtype=float)
        if np.any(chi < 0) or np.any(chi > 1) or not np.all(np.isfinite(chi)):
            raise ValueError("focal indicator must take values in [0, 1]")
        if self.target is not None and not np.all(np.isfinite(self.target)):
            raise ValueError("target contains NaN or Inf")
        if self.terminal not in ("pointwise", "projected"):
            raise ValueError("terminal must be 'pointwise' or 'projected'")

    def protected_vertices(self, mesh: Mesh) -> np.ndarray:
        """Vertices of every element on which the indicator is nonzero."""
        tri = mesh.triangles
        touched = np.any(self.chi[tri] > 0, axis=1)
        return np.unique(tri[touched])

    def check_mesh(self, mesh: Mesh):
        if np.intersect1d(self.protected_vertices(mesh), mesh.boundary_vertices).size:
            raise ValueError("focal region is not compactly contained in the domain")

    def window(self, t):
        """Temporal weight and its derivative at time t."""
        t0, t1 = self.time_window
        if self.variant == FINAL_TIME:
            return 1.0, 0.0
        r = self.window_ramp
        if r <= 0:
            inside = float(t0 <= t <= t1 + 1e-12 * max(1.0, abs(t1)))
            return inside, 0.0
        on = _smoothstep(t, t0, r)
        off = _smoothstep(t, t1 - r, r) if np.isfinite(t1) else (0.0, 0.0, 0.0)
        return on[0] * (1 - off[0]), on[1] * (1 - off[0]) - on[0] * off[1]

    def check_grid(self, times):
        t0, t1 = self.time_window
        if t0 > times[-1] or (np.isfinite(t1) and t1 > times[-1] + 1e-12):
            raise ValueError(f"time window {self.time_window} outside [0, {times[-1]}]")


def _trapezoid_weights(times):
    w = np.empty(len(times))
    dt = np.diff(times)
    w[0] = 0.5 * dt[0]
    w[-1] = 0.5 * dt[-1]
    w[1:-1] = 0.5 * (dt[:-1] + dt[1:])
    return w


def _focal_mass(space: FeSpace, spec: CostFunctionalSpec, det_I=None):
    cq = space.to_quad(spec.chi)
    if det_I is not None:
        cq = cq * det_I
    return assemble_weighted_mass(space, cq)


def _residual(spec: CostFunctionalSpec, sol: StateSolution):
    n = sol.psi.shape[1]
    if spec.variant == FINAL_TIME:
        tgt = np.zeros(n) if spec.target is None else np.asarray(spec.target)
        return sol.psi[-1] - tgt
    field_ = sol.psi if spec.variant == POTENTIAL_TRACKING else sol.dpsi
    tgt = 0.0 if spec.target is None else np.asarray(spec.target)
    return field_ - tgt


def evaluate_cost(sol: StateSolution, spec: CostFunctionalSpec, space: FeSpace, det_I=None) -> float:
    """Value of the objective for a state trajectory.

    ``det_I`` (per volume quadrature point) weights the integrand when the
    state was computed on a mapped domain.
    """
    spec.check_grid(sol.time_grid)
    Mchi = _focal_mass(space, spec, det_I)
    e = _residual(spec, sol)
    if spec.variant == FINAL_TIME:
        return 0.5 * float(e @ (Mchi @ e))
    wt = _trapezoid_weights(sol.time_grid) * np.array([spec.window(t)[0] for t in sol.time_grid])
    quad = np.einsum("ti,ti->t", e, (Mchi @ e.T).T)
    return 0.5 * float(wt @ quad)


@dataclass(frozen=True, eq=False)
class AdjointData:
    """Right-hand side and terminal data of the adjoint problem.

    ``source`` holds nodal values of f, ``source_load`` the assembled load
    vectors ``int f phi_i`` actually used by the solver.
    """

    source: np.ndarray
    source_load: np.ndarray
    p_T: np.ndarray
    dp_T: np.ndarray

    def __add__(self, other):
        return AdjointData(self.source + other.source, self.source_load + other.source_load,
                           self.p_T + other.p_T, self.dp_T + other.dp_T)

    def __mul__(self, a):
        return AdjointData(a * self.source, a * self.source_load, a * self.p_T, a * self.dp_T)

    __rmul__ = __mul__


def adjoint_data(spec: CostFunctionalSpec, sol: StateSolution, params: ModelParams,
                 space: FeSpace) -> AdjointData:
    """Source and terminal data induced by the chosen objective."""
    spec.check_grid(sol.time_grid)
    times = sol.time_grid
    n = sol.psi.shape[1]
    Mchi = _focal_mass(space, spec)
    zeros = np.zeros((len(times), n))
    p_T = np.zeros(n)
    a_T = 1.0 - 2.0 * params.k * sol.dpsi[-1]
    if np.min(a_T) <= 0:
        raise ValueError("degenerate coefficient 1 - 2k dpsi(T) in the terminal data")

    def terminal(weighted_residual):
        if spec.terminal == "projected":
            Ma = assemble_weighted_mass(space, a_T)
            return -spla.spsolve(Ma.tocsc(), Mchi @ weighted_residual)
        return -spec.chi * weighted_residual / a_T

    e = _residual(spec, sol)
    if spec.variant == POTENTIAL_TRACKING:
        w = np.array([spec.window(t)[0] for t in times])
        nodal = w[:, None] * spec.chi[None, :] * e
        load = w[:, None] * (Mchi @ e.T).T
        return AdjointData(nodal, load, p_T, np.zeros(n))
    if spec.variant == FINAL_TIME:
        return AdjointData(zeros, zeros.copy(), p_T, terminal(e))
    # pressure tracking: f = -d/dt(window * (dpsi - f_D)) chi
    jet = np.array([spec.window(t) for t in times])
    if spec.target is None:
        rate = np.zeros_like(e)
    elif spec.target_rate is not None:
        rate = np.asarray(spec.target_rate)
    else:
        rate = np.gradient(np.asarray(spec.target), times, axis=0)
    de = sol.ddpsi - rate
    inner = jet[:, 0:1] * de + jet[:, 1:2] * e
    nodal = -spec.chi[None, :] * inner
    load = -(Mchi @ inner.T).T
    return AdjointData(nodal, load, p_T, terminal(jet[-1, 0] * e[-1]))


@dataclass(frozen=True, eq=False)
class AdjointSolution:
    time_grid: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    ddp: np.ndarray
    p_T: np.ndarray = field(repr=False, default=None)
    dp_T: np.ndarray = field(repr=False, default=None)


def time_reverse(traj, odd: bool = False):
    """Reverse a trajectory in time; odd time derivatives change sign."""
    out = np.asarray(traj)[::-1]
    return -out if odd else out.copy()


def solve_adjoint(space: FeSpace, params: ModelParams, state: StateSolution,
                  data: AdjointData, g: Optional[BoundaryExcitation] = None) -> AdjointSolution:
    """Solve the adjoint problem backwards in time on the state's grid.

    In reversed time the problem is a forward damped wave equation with
    coefficient ``1 + 2k dpsi~`` and the transpose of the convective operator;
    it is linear, so each Newmark step needs a single solve. ``g`` is accepted
    for interface symmetry: the boundary condition is natural in this form.
    """
    times = state.time_grid
    N = len(times) - 1
    dt = times[1] - times[0]
    if data.source_load.shape != state.psi.shape:
        raise ValueError("adjoint data and state trajectories do not match")
    K = space.stiffness
    c2, b, k, sigma = params.c ** 2, params.b, params.k, params.sigma

    # reversed-time coefficients, index m <-> n = N - m
    a_rev = 1.0 - 2.0 * k * state.dpsi[::-1]
    da_rev = 2.0 * k * state.ddpsi[::-1]
    f_rev = data.source_load[::-1]
    psi_rev = state.psi[::-1]

    def damping(m):
        D = b * K
        if k != 0.0:
            D = D + assemble_weighted_mass(space, da_rev[m])
        if sigma != 0.0:
            C = assemble_convective(space, space.element_gradient(psi_rev[m]))
            D = D - 2.0 * sigma * C.T
        return D.tocsr()

    def mass(m):
        return space.mass if k == 0.0 else assemble_weighted_mass(space, a_rev[m])

    n = space.dof_count
    q = np.zeros((N + 1, n))
    dq = np.zeros_like(q)
    ddq = np.zeros_like(q)
    q[0] = data.p_T
    dq[0] = -np.asarray(data.dp_T)
    D0 = damping(0)
    ddq[0] = spla.spsolve(mass(0).tocsc(), f_rev[0] - D0 @ dq[0] - c2 * (K @ q[0]))

    const = k == 0.0 and sigma == 0.0
    if const:
        D = damping(0)
        lu = spla.splu((space.mass + 0.5 * dt * D + 0.25 * dt * dt * c2 * K).tocsc())
    for m in range(1, N + 1):
        pv = dq[m - 1] + 0.5 * dt * ddq[m - 1]
        pu = q[m - 1] + dt * dq[m - 1] + 0.25 * dt * dt * ddq[m - 1]
        if const:
            acc = lu.solve(f_rev[m] - D @ pv - c2 * (K @ pu))
        else:
            D = damping(m)
            S = mass(m) + 0.5 * dt * D + 0.25 * dt * dt * c2 * K
            acc = spla.spsolve(S.tocsc(), f_rev[m] - D @ pv - c2 * (K @ pu))
        if not np.all(np.isfinite(acc)):
            raise FloatingPointError(f"non-finite adjoint values at reversed step {m}")
        ddq[m] = acc
        dq[m] = pv + 0.5 * dt * acc
        q[m] = pu + 0.25 * dt * dt * acc

    p = time_reverse(q)
    dp = time_reverse(dq, odd=True)
    return AdjointSolution(times, p, dp, time_reverse(ddq), np.array(data.p_T), np.array(data.dp_T))


def amplitude_gradient(space: FeSpace, params: ModelParams, g: BoundaryExcitation,
                       adj: AdjointSolution) -> float:
    """Derivative of the objective with respect to the excitation amplitude.

    ``dJ/dA = int_0^T int_{boundary} (c^2 g0 + b g0_t) p`` with ``g = A g0``.
    """
    amp = g.signal.amplitude
    if amp == 0:
        raise ValueError("amplitude gradient needs a nonzero reference amplitude")
    L = assemble_boundary_load(space, 1.0, g.profile.value(space.bqpoints))
    times = adj.time_grid
    s = np.array([params.c ** 2 * g.signal.value(t) + params.b * g.signal.d1(t) for t in times]) / amp
    per_step = s * (adj.p @ L)
    return float(_trapezoid_weights(times) @ per_step)
