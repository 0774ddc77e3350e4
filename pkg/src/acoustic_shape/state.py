"""Time-domain solver for the quasilinear acoustic wave model.

The semi-discrete problem on the reference mesh reads::

    M[I_d (1 - 2k dpsi)] ddpsi + b K[M_d] dpsi + c^2 K[M_d] psi
        - 2 sigma C[M_d, grad psi] dpsi = F_d(t)

with ``F_d(t) = int_{boundary} w_d (c^2 g(F_d x, t) + b g_t(F_d x, t)) phi``.
Without a transform all weights are the identity. Time stepping uses the
average-acceleration Newmark scheme (beta = 1/4, gamma = 1/2) and a Picard
loop on the nonlinear coefficients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .discretize import (
    _TRI_BARY,
    FeSpace,
    MappedCoefficients,
    assemble_boundary_load,
    assemble_convective,
    assemble_matrix_stiffness,
    assemble_weighted_mass,
)
from .errors import BlowUpError, DegeneracyError, NonConvergence

log = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "RampedSine",
    "GaussianPulse",
    "GaussianSpot",
    "UniformProfile",
    "BoundaryExcitation",
    "StateSolution",
    "solve_state",
    "acoustic_pressure",
    "energy_trace",
    "DEGENERACY_FLOOR",
]

DEGENERACY_FLOOR = 0.5
NEWMARK_BETA = 0.25
NEWMARK_GAMMA = 0.5


@dataclass(frozen=True)
class ModelParams:
    """Physical coefficients of the wave model (SI units)."""

    c: float
    b: float
    k: float = 0.0
    sigma: float = 0.0
    beta_a: Optional[float] = None
    rho: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("sound speed c must be positive")
        if not self.b > 0:
            raise ValueError("sound diffusivity b must be positive")
        if not self.rho > 0:
            raise ValueError("mass density rho must be positive")

    @classmethod
    def westervelt(cls, c, b, beta_a, rho=1.0):
        return cls(c, b, beta_a / c ** 2, 0.0, beta_a, rho)

    @classmethod
    def kuznetsov(cls, c, b, beta_a, rho=1.0):
        return cls(c, b, (beta_a - 1.0) / c ** 2, 1.0, beta_a, rho)

    @classmethod
    def linear(cls, c, b, rho=1.0):
        return cls(c, b, 0.0, 0.0, None, rho)

    @classmethod
    def preset(cls, name, c, b, beta_a=None, rho=1.0):
        name = name.lower()
        if name == "linear":
            return cls.linear(c, b, rho)
        if beta_a is None:
            raise ValueError(f"preset {name!r} needs beta_a")
        if name == "westervelt":
            return cls.westervelt(c, b, beta_a, rho)
        if name == "kuznetsov":
            return cls.kuznetsov(c, b, beta_a, rho)
        raise ValueError(f"unknown model preset {name!r}")

    @property
    def is_linear(self) -> bool:
        return self.k == 0.0 and self.sigma == 0.0


# ---------------------------------------------------------------------------
# excitation

def _smoothstep(t, t0, width):
    """C^2 quintic ramp from 0 at t0 to 1 at t0 + width, with two derivatives."""
    if width <= 0:
        step = float(t >= t0)
        return step, 0.0, 0.0
    s = min(max((t - t0) / width, 0.0), 1.0)
    v = s ** 3 * (10 - 15 * s + 6 * s ** 2)
    d1 = 30 * s ** 2 * (1 - s) ** 2 / width
    d2 = 60 * s * (1 - s) * (1 - 2 * s) / width / width  # width**2 may underflow
    return v, d1, d2


def _product(f, g):
    return (f[0] * g[0], f[1] * g[0] + f[0] * g[1], f[2] * g[0] + 2 * f[1] * g[1] + f[0] * g[2])


class _TimeSignal:
    """Carrier times a smooth switch-on (and optional switch-off) window."""

    amplitude: float
    ramp_time: float
    off_time: Optional[float]
    off_ramp: float

    def _carrier(self, t):  # pragma: no cover - interface
        raise NotImplementedError

    def _jet(self, t):
        on = _smoothstep(t, 0.0, self.ramp_time)
        win = on
        if self.off_time is not None:
            off = _smoothstep(t, self.off_time, self.off_ramp)
            win = _product(on, (1.0 - off[0], -off[1], -off[2]))
        return _product(win, self._carrier(t))

    def value(self, t):
        return self.amplitude * self._jet(t)[0]

    def d1(self, t):
        return self.amplitude * self._jet(t)[1]

    def d2(self, t):
        return self.amplitude * self._jet(t)[2]

    def scaled(self, factor):
        return replace(self, amplitude=self.amplitude * factor)


@dataclass(frozen=True)
class RampedSine(_TimeSignal):
    amplitude: float
    frequency: float
    ramp_time: float = 0.5
    off_time: Optional[float] = None
    off_ramp: float = 0.25

    def _carrier(self, t):
        w = 2 * np.pi * self.frequency
        return (np.sin(w * t), w * np.cos(w * t), -w * w * np.sin(w * t))


@dataclass(frozen=True)
class GaussianPulse(_TimeSignal):
    amplitude: float
    center: float
    width: float
    ramp_time: float = 0.1
    off_time: Optional[float] = None
    off_ramp: float = 0.25

    def _carrier(self, t):
        z = (t - self.center) / self.width
        e = np.exp(-z * z)
        return (e, -2 * z * e / self.width, (4 * z * z - 2) * e / self.width ** 2)


@dataclass(frozen=True)
class GaussianSpot:
    """Spatial profile ``exp(-|x - center|^2 / width^2)``, defined on the whole plane."""

    center: tuple
    width: float

    def value(self, points):
        diff = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        return np.exp(-np.sum(diff * diff, axis=-1) / self.width ** 2)

    def gradient(self, points):
        diff = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        return (-2.0 / self.width ** 2) * diff * self.value(points)[..., None]


@dataclass(frozen=True)
class UniformProfile:
    level: float = 1.0

    def value(self, points):
        return np.full(np.asarray(points).shape[:-1], float(self.level))

    def gradient(self, points):
        return np.zeros(np.asarray(points, dtype=float).shape)


@dataclass(frozen=True)
class BoundaryExcitation:
    """Separable Neumann data ``g(x, t) = profile(x) * signal(t)``.

    The profile is defined on the hold-all domain so that ``g o F_d`` and the
    normal derivative of ``g`` are available.
    """

    profile: object
    signal: object

    def g(self, points, t):
        return self.profile.value(points) * self.signal.value(t)

    def g_t(self, points, t):
        return self.profile.value(points) * self.signal.d1(t)

    def grad_g(self, points, t):
        return self.profile.gradient(points) * self.signal.value(t)

    def grad_g_t(self, points, t):
        return self.profile.gradient(points) * self.signal.d1(t)

    def scaled(self, factor):
        return BoundaryExcitation(self.profile, self.signal.scaled(factor))

    def check_rest_compatibility(self, atol=1e-12):
        """With psi0 = psi1 = 0 the data must satisfy g(0) = g_t(0) = 0."""
        s0, s1 = self.signal.value(0.0), self.signal.d1(0.0)
        if abs(s0) > atol or abs(s1) > atol:
            raise ValueError("excitation incompatible with rest initial state: "
                             f"signal(0)={s0:.3e}, signal'(0)={s1:.3e}")


# ---------------------------------------------------------------------------
# solution container

@dataclass(frozen=True, eq=False)
class StateSolution:
    """Nodal trajectories on a uniform time grid; arrays have shape (N+1, n)."""

    time_grid: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    ddpsi: np.ndarray
    degeneracy_margin: float
    energy_trace: np.ndarray
    picard_iterations: np.ndarray
    params: ModelParams
    mapped: Optional[MappedCoefficients] = field(default=None, repr=False)

    @property
    def dt(self) -> float:
        return float(self.time_grid[1] - self.time_grid[0])

    @property
    def n_steps(self) -> int:
        return len(self.time_grid) - 1


def _time_grid(T, N):
    if not T > 0 or int(N) < 1:
        raise ValueError("need T > 0 and N >= 1")
    return np.linspace(0.0, float(T), int(N) + 1)


class _Operators:
    """Time-independent pieces of the (possibly transformed) discrete problem."""

    def __init__(self, space: FeSpace, params: ModelParams, g: BoundaryExcitation,
                 mapped: Optional[MappedCoefficients]):
        self.space = space
        self.params = params
        self.mapped = mapped
        if mapped is None:
            self.det_I = np.ones_like(space.qweights)
            self.Mq = None
            self.w = 1.0
            self.bpoints = space.bqpoints
            self.vpoints = space.qpoints
            self.K = space.stiffness
            self.M = space.mass
        else:
            self.det_I = mapped.det_I
            self.Mq = mapped.M
            self.w = mapped.w
            self.bpoints = mapped.boundary_points
            self.vpoints = mapped.volume_points
            self.K = assemble_matrix_stiffness(space, mapped.M)
            self.M = assemble_weighted_mass(space, mapped.det_I)
        self.g = g
        self.profile_load = assemble_boundary_load(space, self.w, g.profile.value(self.bpoints))

    def load(self, t, source=None):
        p = self.params
        s = self.g.signal
        out = (p.c ** 2 * s.value(t) + p.b * s.d1(t)) * self.profile_load
        if source is not None:
            fq = source(self.vpoints.reshape(-1, 2), t).reshape(self.det_I.shape)
            out = out + _volume_load(self.space, fq * self.det_I)
        return out

    def mass_a(self, dpsi):
        if self.params.k == 0.0:
            return self.M
        a = 1.0 - 2.0 * self.params.k * self.space.to_quad(dpsi)
        return assemble_weighted_mass(self.space, self.det_I * a)

    def convective(self, psi):
        return assemble_convective(self.space, self.space.element_gradient(psi), self.Mq)


def _volume_load(space: FeSpace, fq):
    local = np.einsum("mq,qi->mi", fq * space.qweights, _TRI_BARY)
    out = np.zeros(space.dof_count)
    for k in range(3):
        np.add.at(out, space.mesh.triangles[:, k], local[:, k])
    return out


def _margin(params, dpsi):
    if params.k == 0.0:
        return 1.0
    return float(np.min(1.0 - 2.0 * params.k * dpsi))


def solve_state(space: FeSpace, params: ModelParams, g: BoundaryExcitation, psi0=None, psi1=None,
                transform: Optional[MappedCoefficients] = None, T: float = 1.0, N: int = 100,
                tol: float = 1e-12, max_iter: int = 25,
                source: Optional[Callable] = None, energy_guard: float = 1e6,
                degeneracy_floor: float = DEGENERACY_FLOOR) -> StateSolution:
    """Integrate the state problem on ``[0, T]`` with ``N`` uniform steps.

    Parameters
    ----------
    transform : MappedCoefficients, optional
        Method-of-mappings weights; solves the problem pulled back from F_d(Omega).
    tol : float
        Picard stops once the mass-norm of the velocity increment drops below tol.
    source : callable(points, t) -> values, optional
        Volumetric load used only for manufactured-solution verification.

    Raises
    ------
    DegeneracyError
        if ``1 - 2k dpsi`` drops below ``degeneracy_floor`` at some node.
    NonConvergence
        if Picard needs more than ``max_iter`` iterations.
    BlowUpError
        on non-finite values or runaway energy growth.
    """
    n = space.dof_count
    psi0 = np.zeros(n) if psi0 is None else np.asarray(psi0, dtype=float).copy()
    psi1 = np.zeros(n) if psi1 is None else np.asarray(psi1, dtype=float).copy()
    if not (np.any(psi0) or np.any(psi1)):
        g.check_rest_compatibility()
    if transform is not None and np.any(transform.det_I <= 0):
        raise ValueError("transform has non-positive Jacobian determinant")

    times = _time_grid(T, N)
    dt = times[1] - times[0]
    ops = _Operators(space, params, g, transform)
    K, c2, b = ops.K, params.c ** 2, params.b
    nonlinear = not params.is_linear
    use_sigma = params.sigma != 0.0

    psi = np.zeros((len(times), n))
    dpsi = np.zeros_like(psi)
    ddpsi = np.zeros_like(psi)
    iters = np.zeros(len(times), dtype=np.int64)
    psi[0], dpsi[0] = psi0, psi1

    margin = _margin(params, psi1)
    if margin < degeneracy_floor:
        raise DegeneracyError(f"initial data degenerate: min(1-2k dpsi) = {margin:.4f}", 0, margin)

    # initial acceleration from the equation at t = 0
    rhs0 = ops.load(0.0, source) - b * (K @ psi1) - c2 * (K @ psi0)
    if use_sigma:
        rhs0 += 2.0 * params.sigma * (ops.convective(psi0) @ psi1)
    ddpsi[0] = spla.spsolve(ops.mass_a(psi1).tocsc(), rhs0)

    forcing = [ops.load(t, source) for t in times]
    data_scale = max(float(T * max(np.linalg.norm(f) for f in forcing)) ** 2, 1e-300)
    E_ref = None

    lin_solver = None
    if not nonlinear:
        lin_solver = spla.splu((ops.M + 0.5 * dt * b * K + 0.25 * dt * dt * c2 * K).tocsc())

    for step in range(1, len(times)):
        pred_v = dpsi[step - 1] + 0.5 * dt * ddpsi[step - 1]
        pred_u = psi[step - 1] + dt * dpsi[step - 1] + 0.25 * dt * dt * ddpsi[step - 1]
        F = forcing[step]
        if lin_solver is not None:
            acc = lin_solver.solve(F - b * (K @ pred_v) - c2 * (K @ pred_u))
            it = 1
        else:
            acc = ddpsi[step - 1].copy()
            for it in range(1, max_iter + 1):
                v = pred_v + 0.5 * dt * acc
                u = pred_u + 0.25 * dt * dt * acc
                m_it = _margin(params, v)
                if m_it < degeneracy_floor:
                    raise DegeneracyError(
                        f"degeneracy at step {step} (t={times[step]:.4g}): "
                        f"min(1-2k dpsi) = {m_it:.4f} < {degeneracy_floor}", step, m_it)
                D = b * K
                if use_sigma:
                    D = D - 2.0 * params.sigma * ops.convective(u)
                S = ops.mass_a(v) + 0.5 * dt * D + 0.25 * dt * dt * c2 * K
                new = spla.spsolve(S.tocsc(), F - D @ pred_v - c2 * (K @ pred_u))
                if not np.all(np.isfinite(new)):
                    raise BlowUpError(f"non-finite values at step {step}", step)
                incr = 0.5 * dt * space.l2_norm(new - acc)
                acc = new
                if incr < tol:
                    break
            else:
                raise NonConvergence(f"Picard iteration did not converge at step {step} "
                                     f"(last increment {incr:.3e})", step)
        ddpsi[step] = acc
        dpsi[step] = pred_v + 0.5 * dt * acc
        psi[step] = pred_u + 0.25 * dt * dt * acc
        iters[step] = it
        if not np.all(np.isfinite(psi[step])):
            raise BlowUpError(f"non-finite values at step {step}", step)
        m_step = _margin(params, dpsi[step])
        if m_step < degeneracy_floor:
            raise DegeneracyError(
                f"degeneracy at step {step} (t={times[step]:.4g}): "
                f"min(1-2k dpsi) = {m_step:.4f} < {degeneracy_floor}", step, m_step)
        margin = min(margin, m_step)
        E = 0.5 * dpsi[step] @ (ops.M @ dpsi[step]) + 0.5 * c2 * psi[step] @ (K @ psi[step])
        if E_ref is None:
            E0 = 0.5 * psi1 @ (ops.M @ psi1) + 0.5 * c2 * psi0 @ (K @ psi0)
            E_ref = max(E0, data_scale)
        if E > energy_guard * E_ref:
            raise BlowUpError(f"energy blow-up at step {step}: {E:.3e} > {energy_guard:g} x {E_ref:.3e}", step)

    energy = 0.5 * np.einsum("ti,ti->t", dpsi, (ops.M @ dpsi.T).T) \
        + 0.5 * c2 * np.einsum("ti,ti->t", psi, (K @ psi.T).T)
    return StateSolution(times, psi, dpsi, ddpsi, margin, energy, iters, params, transform)


def acoustic_pressure(sol: StateSolution, params: ModelParams) -> np.ndarray:
    """Acoustic pressure ``rho * dpsi`` at every node and time."""
    return params.rho * sol.dpsi


def energy_trace(sol: StateSolution, params: ModelParams, space: FeSpace) -> np.ndarray:
    """Lower-order energy ``1/2 |dpsi|^2 + c^2/2 |grad psi|^2`` per time step."""
    if sol.mapped is None:
        M, K = space.mass, space.stiffness
    else:
        M = assemble_weighted_mass(space, sol.mapped.det_I)
        K = assemble_matrix_stiffness(space, sol.mapped.M)
    kin = np.einsum("ti,ti->t", sol.dpsi, (M @ sol.dpsi.T).T)
    pot = np.einsum("ti,ti->t", sol.psi, (K @ sol.psi.T).T)
    return 0.5 * kin + 0.5 * params.c ** 2 * pot
