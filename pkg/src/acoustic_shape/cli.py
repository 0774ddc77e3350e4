"""Command-line entry point: ``acoustic-shape <subcommand> --config run.yaml``."""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import traceback
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError
from .io import write_boundary_vtk, write_snapshots, write_table, write_trajectory_csv

SUBCOMMANDS = ("solve", "adjoint", "gradient", "taylor-test", "optimize", "check")

log = logging.getLogger("acoustic_shape")


def _parser():
    p = argparse.ArgumentParser(prog="acoustic-shape", description=__doc__)
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="YAML run description (optional for 'check')")
    p.add_argument("--out", default=None, help="run directory (default: runs/<command>)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker count; recorded only, all solves run sequentially")
    p.add_argument("--seed", type=int, default=None, help="seed for randomised checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _probe_series(problem, sol):
    center = problem.cost.focal_vertices
    return {"focal_mean_psi": sol.psi[:, center].mean(axis=1),
            "focal_mean_pressure": problem.params.rho * sol.dpsi[:, center].mean(axis=1)}


def _cmd_solve(cfg, out: Path, adjoint=False):
    from .driver import build_problem

    problem = build_problem(cfg)
    sol = problem.solve()
    J = problem.cost_value(sol)
    every = int(cfg.output.get("snapshot_every", 20))
    write_trajectory_csv(out / "state.csv", sol.time_grid, sol.energy_trace, sol.degeneracy_margin,
                         _probe_series(problem, sol))
    write_snapshots(out / "vtk", "state", problem.mesh, sol.time_grid,
                    {"psi": sol.psi, "pressure": problem.params.rho * sol.dpsi}, every)
    result = {"final_J": J, "degeneracy_margin": sol.degeneracy_margin}
    if adjoint:
        adj = problem.adjoint(sol)
        focal = problem.cost.focal_vertices
        write_trajectory_csv(out / "state_adjoint.csv", adj.time_grid,
                             probes={"focal_mean_p": adj.p[:, focal].mean(axis=1)})
        write_snapshots(out / "vtk", "state_adjoint", problem.mesh, adj.time_grid, {"p": adj.p}, every)
    return result


def _cmd_gradient(cfg, out: Path):
    from .driver import build_field, build_problem
    from .shapegrad import shape_derivative, shape_derivative_volume

    problem = build_problem(cfg)
    sol, adj, dens = problem.gradient()
    bg = dens.geometry
    x = problem.mesh.vertices[bg.vertex_ids]
    write_table(out / "gradient_density.csv", ["vertex", "x", "y", "nx", "ny", "arc_weight", "density"],
                [[int(v), *x[i], *bg.outward_normal[i], bg.arc_weight[i], dens.values[i]]
                 for i, v in enumerate(bg.vertex_ids)])
    write_boundary_vtk(out / "gradient_density.vtk", problem.mesh, bg.vertex_ids, dens.values)
    result = {"final_J": problem.cost_value(sol), "excluded_vertices": [int(v) for v in dens.excluded]}
    if cfg.taylor.get("field"):
        h = build_field(cfg.taylor["field"], problem.mesh)
        result["dJ_boundary"] = shape_derivative(dens, h, problem.protected())
        result["dJ_volume"] = shape_derivative_volume(problem.space, sol, adj, problem.params,
                                                      problem.excitation, h, problem.transform_mode)
    return result


def _cmd_taylor(cfg, out: Path):
    from .driver import build_field, build_problem
    from .shapegrad import taylor_test

    if not cfg.taylor.get("field"):
        raise ConfigError("taylor-test needs a 'taylor.field' section")
    problem = build_problem(cfg)
    h = build_field(cfg.taylor["field"], problem.mesh)
    d_values = cfg.taylor.get("d_values", (1e-1, 5e-2, 2.5e-2, 1.25e-2))
    rep = taylor_test(problem, h, d_values)
    rep.write_csv(out / "taylor.csv")
    print(rep.summary())
    return {"final_J": rep.J0, "dJ": rep.dJ, "gap": float(rep.gaps[-1]), "order": rep.fitted_order,
            "monotone": rep.monotone}


def _cmd_optimize(cfg, out: Path):
    from .driver import OptimizationHistory, run_optimization

    hist = run_optimization(cfg, out)
    write_table(out / "history.csv", OptimizationHistory.header, hist.rows())
    return {"final_J": float(hist.J[-1]), "iterations": len(hist) - 1, "opt_status": hist.status,
            "message": hist.message}


def _cmd_check(seed, out: Path):
    from .selfcheck import run_checks

    results = run_checks(seed or 0)
    for r in results:
        print(r.line())
    write_table(out / "check.csv", ["item", "passed", "detail"],
                [[r.name, r.passed, r.detail] for r in results])
    return {"all_passed": all(r.passed for r in results),
            "items": {r.name: r.passed for r in results}}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "version.json", {"package": "acoustic_shape", "version": __version__,
                                       "python": platform.python_version(), "numpy": np.__version__})
    status = {"status": "error", "command": args.command, "iterations": 0, "final_J": None,
              "threads": args.threads, "seed": args.seed}
    code = 1
    try:
        if args.command == "check":
            (out / "config_echo.yaml").write_text(yaml.safe_dump({"command": "check", "seed": args.seed}))
            res = _cmd_check(args.seed, out)
            code = 0 if res["all_passed"] else 1
        else:
            from .driver import load_config

            if not args.config:
                raise ConfigError(f"'{args.command}' needs --config")
            try:
                raw = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            (out / "config_echo.yaml").write_text(raw)
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            handlers = {"solve": lambda: _cmd_solve(cfg, out),
                        "adjoint": lambda: _cmd_solve(cfg, out, adjoint=True),
                        "gradient": lambda: _cmd_gradient(cfg, out),
                        "taylor-test": lambda: _cmd_taylor(cfg, out),
                        "optimize": lambda: _cmd_optimize(cfg, out)}
            res = handlers[args.command]()
            code = 0
        status.update(res)
        status["status"] = "ok" if code == 0 else "failed"
    except ConfigError as exc:
        if not (out / "config_echo.yaml").exists():
            (out / "config_echo.yaml").write_text("# config could not be read\n")
        print(f"ConfigError: {exc}", file=sys.stderr)
        status.update(status="config_error", error=str(exc), error_class="ConfigError")
        code = 2
    except Exception as exc:  # noqa: BLE001 - reported through the status file
        if args.verbose:
            traceback.print_exc()
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        status.update(status="error", error=str(exc), error_class=type(exc).__name__)
        code = 1
    _write_json(out / "status.json", status)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
