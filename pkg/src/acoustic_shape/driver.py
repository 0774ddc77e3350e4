"""Run configuration, reference problems and the shape-optimization loop."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .adjoint import CostFunctionalSpec, focal_indicator
from .errors import (
    AcousticShapeError,
    ConfigError,
    DegeneracyError,
    DeformationTooLarge,
    MeshError,
    NonConvergence,
    SupportError,
)
from .geometry import Mesh, build_structured_mesh, make_bump_field, make_ring_field, min_angle
from .io import read_mesh, write_mesh
from .shapegrad import ShapeProblem, lift_density, shape_derivative
from .state import BoundaryExcitation, GaussianPulse, GaussianSpot, ModelParams, RampedSine, UniformProfile
from .transform import pushforward_compose

log = logging.getLogger(__name__)

__all__ = [
    "RunConfig",
    "OptimizationSettings",
    "OptimizationHistory",
    "load_config",
    "config_from_dict",
    "reference_disk_config",
    "toy_focusing_config",
    "build_problem",
    "build_field",
    "run_optimization",
]


# ---------------------------------------------------------------------------
# configuration

@dataclass
class OptimizationSettings:
    max_iters: int = 10
    step_0: float = 0.05
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 20
    grad_tol: float = 0.0
    step_tol: float = 1e-8
    min_angle: float = 5.0
    smoothing_passes: int = 3
    j_tol: float = 0.0

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise ConfigError("max_iters must be >= 0 and max_backtracks >= 1")
        if not (0 < self.c1 < 1 and 0 < self.backtrack < 1 and self.step_0 > 0):
            raise ConfigError("need 0 < c1 < 1, 0 < backtrack < 1 and step_0 > 0")


@dataclass
class RunConfig:
    """Validated run description; ``raw`` keeps the parsed document for echoing."""

    mesh: dict
    model: dict
    excitation: dict
    cost: dict
    T: float
    N: int
    solver: dict = field(default_factory=dict)
    perturbation: Optional[dict] = None
    taylor: dict = field(default_factory=dict)
    optimization: OptimizationSettings = field(default_factory=OptimizationSettings)
    output: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


_TOP_KEYS = {"mesh", "model", "excitation", "cost", "time", "solver", "perturbation",
             "taylor", "optimization", "output", "seed"}


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing '{key}' in section '{where}'")
    return d[key]


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
    for key in ("mesh", "model", "excitation", "cost", "time"):
        _require(doc, key, "<top>")
    time = doc["time"]
    try:
        T = float(_require(time, "T", "time"))
        N = int(_require(time, "N", "time"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad time section: {exc}") from exc
    if not T > 0 or N < 1:
        raise ConfigError("time.T must be positive and time.N >= 1")
    try:
        opt = OptimizationSettings(**(doc.get("optimization") or {}))
    except TypeError as exc:
        raise ConfigError(f"bad optimization section: {exc}") from exc
    cfg = RunConfig(
        mesh=dict(doc["mesh"]), model=dict(doc["model"]), excitation=dict(doc["excitation"]),
        cost=dict(doc["cost"]), T=T, N=N, solver=dict(doc.get("solver") or {}),
        perturbation=doc.get("perturbation"), taylor=dict(doc.get("taylor") or {}),
        optimization=opt, output=dict(doc.get("output") or {}), seed=int(doc.get("seed", 0)),
        raw=copy.deepcopy(doc),
    )
    # build once so that every referenced region is checked up front
    build_problem(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# builders

def _build_mesh(spec: dict) -> Mesh:
    if "file" in spec:
        return read_mesh(spec["file"])
    try:
        shape = spec.get("shape", "disk")
        res = spec.get("resolution", 16)
        kw = {k: spec[k] for k in ("radius", "r_inner", "r_outer", "theta0", "theta1",
                                  "hold_all_margin") if k in spec}
        if "center" in spec:
            kw["center"] = tuple(spec["center"])
        return build_structured_mesh(shape, res, **kw)
    except MeshError as exc:
        raise ConfigError(f"mesh section: {exc}") from exc


def _build_params(spec: dict) -> ModelParams:
    try:
        if "preset" in spec:
            return ModelParams.preset(spec["preset"], float(spec.get("c", 1.0)), float(spec.get("b", 0.1)),
                                      spec.get("beta_a"), float(spec.get("rho", 1.0)))
        return ModelParams(float(spec["c"]), float(spec["b"]), float(spec.get("k", 0.0)),
                           float(spec.get("sigma", 0.0)), spec.get("beta_a"), float(spec.get("rho", 1.0)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"model section: {exc}") from exc


def _build_excitation(spec: dict, mesh: Mesh) -> BoundaryExcitation:
    prof = spec.get("profile", {"type": "uniform"})
    sig = _require(spec, "signal", "excitation")
    try:
        if prof.get("type", "gaussian") == "gaussian":
            center = np.asarray(prof["center"], dtype=float)
            width = float(prof["width"])
            bpts = mesh.vertices[mesh.boundary_vertices]
            # the excitation region must actually meet the boundary
            if np.min(np.linalg.norm(bpts - center, axis=1)) > 2.0 * width:
                raise ConfigError("excitation profile does not reach the boundary")
            profile = GaussianSpot(tuple(center), width)
        elif prof["type"] == "uniform":
            profile = UniformProfile(float(prof.get("level", 1.0)))
        else:
            raise ConfigError(f"unknown profile type {prof['type']!r}")
        kind = sig.get("type", "ramped_sine")
        opts = {k: sig[k] for k in ("ramp_time", "off_time", "off_ramp") if k in sig}
        if kind == "ramped_sine":
            signal = RampedSine(float(sig["amplitude"]), float(sig["frequency"]), **opts)
        elif kind == "gaussian_pulse":
            signal = GaussianPulse(float(sig["amplitude"]), float(sig["center"]), float(sig["width"]), **opts)
        else:
            raise ConfigError(f"unknown signal type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"excitation section: {exc}") from exc
    g = BoundaryExcitation(profile, signal)
    try:
        g.check_rest_compatibility()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return g


def _build_cost(spec: dict, mesh: Mesh, params, excitation, T, N, solver) -> CostFunctionalSpec:
    focal = _require(spec, "focal", "cost")
    try:
        fv, chi = focal_indicator(mesh, tuple(focal["center"]), float(focal["radius"]),
                                  bool(focal.get("smooth", True)))
    except KeyError as exc:
        raise ConfigError(f"cost.focal: missing {exc}") from exc
    if fv.size == 0:
        raise ConfigError("focal region contains no mesh vertex")
    variant = spec.get("variant", "potential_tracking")
    window = tuple(float(x) for x in spec.get("window", (0.0, T)))
    tgt = spec.get("target", {"type": "zero"})
    kind = tgt.get("type", "zero")
    target = None
    if kind == "constant":
        n = mesh.n_vertices
        target = np.full(n if variant == "final_time" else (N + 1, n), float(tgt["value"]))
    elif kind == "reference_solve":
        # manufactured target: the state of the unperturbed configuration, scaled
        from .discretize import FeSpace
        from .state import solve_state

        sol = solve_state(FeSpace(mesh), params, excitation, T=T, N=N,
                          tol=float(solver.get("tol", 1e-12)))
        src = {"potential_tracking": sol.psi, "pressure_tracking": sol.dpsi,
               "final_time": sol.psi[-1]}[variant]
        target = float(tgt.get("scale", 1.0)) * src
    elif kind != "zero":
        raise ConfigError(f"unknown target type {kind!r}")
    try:
        cost = CostFunctionalSpec(variant, fv, chi, window, float(spec.get("window_ramp", 0.0)), target,
                                  terminal=spec.get("terminal", "projected"))
        cost.check_mesh(mesh)
        cost.check_grid(np.linspace(0.0, T, N + 1))
    except ValueError as exc:
        raise ConfigError(f"cost section: {exc}") from exc
    return cost


def build_field(spec: dict, mesh: Mesh):
    """Deformation field from a ``{type: ring|bump, ...}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("type", "ring")
    spec.pop("d", None)
    try:
        if kind == "ring":
            if "center" in spec:
                spec["center"] = tuple(spec["center"])
            return make_ring_field(mesh, **spec)
        if kind == "bump":
            return make_bump_field(tuple(spec["center"]), float(spec["radius"]), tuple(spec["amplitude"]), mesh)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"deformation field: {exc}") from exc
    raise ConfigError(f"unknown deformation field type {kind!r}")


def build_problem(cfg: RunConfig, mesh: Optional[Mesh] = None, perturbed: bool = True) -> ShapeProblem:
    """ShapeProblem on the configured mesh.

    The cost target is always built on the unperturbed mesh; with
    ``perturbed`` the mesh is then moved by the configured perturbation, whose
    field must vanish on the focal region so the nodal target stays valid.
    """
    base = _build_mesh(cfg.mesh) if mesh is None else mesh
    params = _build_params(cfg.model)
    g = _build_excitation(cfg.excitation, base)
    cost = _build_cost(cfg.cost, base, params, g, cfg.T, cfg.N, cfg.solver)
    work = base
    if perturbed and mesh is None and cfg.perturbation:
        h = build_field(cfg.perturbation, base)
        try:
            h.check_vanishes_on(cost.protected_vertices(base), "focal region")
            work, _ = pushforward_compose(np.zeros(base.n_vertices), h,
                                          float(cfg.perturbation.get("d", 0.1)), base)
        except (SupportError, DeformationTooLarge) as exc:
            raise ConfigError(f"perturbation section: {exc}") from exc
    s = cfg.solver
    return ShapeProblem(work, params, g, cost, cfg.T, cfg.N, float(s.get("tol", 1e-12)),
                        int(s.get("max_iter", 25)), s.get("transform_mode", "p1"),
                        s.get("normal_mode", "trace"))


# ---------------------------------------------------------------------------
# reference problems

def reference_disk_config(preset: str = "linear", resolution: int = 16, N: int = 200,
                          amplitude: Optional[float] = None) -> dict:
    """The coarse disk problem used by the Taylor and volume/boundary checks."""
    if amplitude is None:
        amplitude = 0.05 if preset == "linear" else 0.02
    return {
        "mesh": {"shape": "disk", "resolution": resolution, "radius": 1.0},
        "model": {"preset": preset, "c": 1.0, "b": 0.3, "beta_a": 6.0, "rho": 1.0},
        "excitation": {
            "profile": {"type": "gaussian", "center": [-1.0, 0.0], "width": 0.6},
            "signal": {"type": "ramped_sine", "amplitude": amplitude, "frequency": 1.0, "ramp_time": 0.5},
        },
        "cost": {"variant": "potential_tracking", "focal": {"center": [0.0, 0.0], "radius": 0.25},
                 "window": [0.0, 2.0], "target": {"type": "constant", "value": 0.01}},
        "time": {"T": 2.0, "N": N},
        "solver": {"tol": 1e-12, "max_iter": 25, "transform_mode": "p1", "normal_mode": "trace"},
        "taylor": {"field": {"type": "ring", "center": [0.0, 0.0], "r_inner": 0.6, "r_outer": 1.4,
                             "radial": 0.4, "mode": 2, "mode_amp": 0.5, "phase": 0.3},
                   "d_values": [0.1, 0.05, 0.025, 0.0125]},
    }


def toy_focusing_config(resolution: int = 12, N: int = 160) -> dict:
    """Focusing toy problem: recover the disk whose field in a small interior disk is the target."""
    return {
        "mesh": {"shape": "disk", "resolution": resolution, "radius": 1.0},
        "model": {"preset": "linear", "c": 1.0, "b": 0.3, "rho": 1.0},
        "excitation": {
            "profile": {"type": "gaussian", "center": [-1.0, 0.0], "width": 0.6},
            "signal": {"type": "ramped_sine", "amplitude": 0.05, "frequency": 1.0, "ramp_time": 0.5},
        },
        "cost": {"variant": "potential_tracking", "focal": {"center": [0.0, 0.0], "radius": 0.25},
                 "window": [0.0, 2.0], "target": {"type": "reference_solve", "scale": 1.0}},
        "time": {"T": 2.0, "N": N},
        "solver": {"tol": 1e-12, "transform_mode": "p1", "normal_mode": "trace"},
        "perturbation": {"type": "ring", "center": [0.0, 0.0], "r_inner": 0.6, "r_outer": 1.4,
                         "radial": 1.0, "mode": 2, "mode_amp": 0.6, "phase": 0.0, "d": 0.12},
        "optimization": {"max_iters": 10, "step_0": 0.1, "c1": 1e-4, "backtrack": 0.5,
                         "max_backtracks": 20, "min_angle": 5.0, "smoothing_passes": 3},
    }


# ---------------------------------------------------------------------------
# optimization loop

@dataclass
class IterationRecord:
    iteration: int
    J: float
    slope: float
    step: float
    margin: float
    checksum: str
    backtracks: int = 0


@dataclass
class OptimizationHistory:
    records: list = field(default_factory=list)
    final_mesh: Optional[Mesh] = None
    status: str = "running"
    message: str = ""

    @property
    def J(self) -> np.ndarray:
        return np.array([r.J for r in self.records])

    def __len__(self):
        return len(self.records)

    def rows(self):
        for r in self.records:
            yield [r.iteration, r.J, abs(r.slope), r.step, r.margin, r.checksum, r.backtracks]

    header = ["iteration", "J", "abs_dJ", "step", "margin", "mesh_checksum", "backtracks"]


def _line_search(problem: ShapeProblem, h, J0, slope, s: OptimizationSettings):
    d = s.step_0
    for bt in range(s.max_backtracks):
        try:
            Jd = problem.J(h, d)
        except (DeformationTooLarge, DegeneracyError, NonConvergence) as exc:
            log.info("trial d=%.3e rejected: %s", d, exc)
            Jd = np.inf
        if Jd <= J0 + s.c1 * d * slope and Jd < J0:
            return d, Jd, bt
        d *= s.backtrack
        if d < s.step_tol:
            break
    return None, None, s.max_backtracks


def run_optimization(cfg: RunConfig, out_dir=None) -> OptimizationHistory:
    """Steepest descent on the boundary density with Armijo backtracking.

    Every accepted iteration pushes the mesh forward; the focal region is held
    fixed. The loop stops on ``j_tol``, ``grad_tol``, a failed line search or
    ``max_iters``; a mesh whose minimum angle drops below ``min_angle`` aborts
    the run and the last good mesh is kept (and written to ``out_dir``).
    """
    s = cfg.optimization
    problem = build_problem(cfg)
    hist = OptimizationHistory()
    protected = problem.protected()
    last_step = 0.0
    backtracks = 0
    for it in range(s.max_iters + 1):
        try:
            sol = problem.solve()
        except AcousticShapeError as exc:
            raise type(exc)(f"iteration {it}: {exc}") from exc
        J = problem.cost_value(sol)
        if J <= s.j_tol:
            hist.records.append(IterationRecord(it, J, 0.0, last_step, sol.degeneracy_margin,
                                                problem.mesh.checksum(), backtracks))
            hist.status, hist.message = "converged", "objective at tolerance"
            break
        _, _, dens = problem.gradient(sol)
        h = lift_density(dens, problem.mesh, protected, s.smoothing_passes, scale=1.0)
        slope = shape_derivative(dens, h, protected)
        hist.records.append(IterationRecord(it, J, slope, last_step, sol.degeneracy_margin,
                                            problem.mesh.checksum(), backtracks))
        log.info("iter %d J=%.6e slope=%.3e", it, J, slope)
        if it == s.max_iters:
            hist.status, hist.message = "max_iters", "iteration limit reached"
            break
        if slope >= 0 or abs(slope) <= s.grad_tol:
            hist.status, hist.message = "converged", "no descent direction"
            break
        d, Jd, backtracks = _line_search(problem, h, J, slope, s)
        if d is None:
            hist.status, hist.message = "stalled", "line search failed"
            break
        moved, _ = pushforward_compose(np.zeros(problem.mesh.n_vertices), h, d, problem.mesh)
        angle = min_angle(moved)
        if angle < s.min_angle:
            hist.status = "aborted"
            hist.message = f"mesh quality: minimum angle {angle:.2f} deg < {s.min_angle}"
            break
        problem = ShapeProblem(moved, problem.params, problem.excitation, problem.cost, problem.T,
                               problem.N, problem.tol, problem.max_iter, problem.transform_mode,
                               problem.normal_mode)
        last_step = d
    hist.final_mesh = problem.mesh
    if out_dir is not None:
        write_mesh(problem.mesh, Path(out_dir) / "final_mesh.txt")
    return hist
