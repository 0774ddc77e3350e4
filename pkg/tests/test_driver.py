import copy

import numpy as np
import pytest
import yaml

from acoustic_shape.driver import (
    OptimizationSettings,
    build_field,
    build_problem,
    config_from_dict,
    load_config,
    reference_disk_config,
    run_optimization,
    toy_focusing_config,
)
from acoustic_shape.errors import ConfigError
from acoustic_shape.io import read_mesh


def small_cfg():
    doc = reference_disk_config("linear", resolution=5, N=40)
    doc["time"]["T"] = 1.0
    doc["cost"]["window"] = [0.0, 1.0]
    return doc


def test_reference_config_builds():
    cfg = config_from_dict(small_cfg())
    prob = build_problem(cfg)
    assert prob.N == 40 and prob.params.b == 0.3
    assert prob.transform_mode == "p1" and prob.normal_mode == "trace"
    h = build_field(cfg.taylor["field"], prob.mesh)
    h.check_vanishes_on(prob.protected())


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("mesh"),
    lambda d: d.update(extra=1),
    lambda d: d["time"].update(N=0),
    lambda d: d["model"].update(preset="westervelt", beta_a=None),
    lambda d: d["cost"]["focal"].update(center=[0.95, 0.0]),
    lambda d: d["cost"]["focal"].update(center=[5.0, 5.0]),
    lambda d: d["cost"].update(window=[0.0, 9.0]),
    lambda d: d["excitation"]["signal"].update(ramp_time=0.0),
    lambda d: d["excitation"]["profile"].update(center=[5.0, 0.0]),
    lambda d: d.update(optimization={"c1": 2.0}),
    lambda d: d.update(optimization={"bogus": 1}),
    lambda d: d.update(perturbation={"type": "ring", "r_inner": 0.1, "r_outer": 1.4, "d": 0.1}),
])
def test_invalid_configs_raise_config_error(mutate):
    doc = small_cfg()
    mutate(doc)
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_load_config_yaml(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(small_cfg()))
    cfg = load_config(p)
    assert cfg.to_dict() == small_cfg()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("mesh: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_settings_validation():
    with pytest.raises(ConfigError):
        OptimizationSettings(backtrack=1.5)
    with pytest.raises(ConfigError):
        OptimizationSettings(max_iters=-1)


def test_perturbation_moves_mesh():
    doc = small_cfg()
    doc["perturbation"] = {"type": "ring", "r_inner": 0.6, "r_outer": 1.4, "radial": 1.0, "d": 0.1}
    cfg = config_from_dict(doc)
    moved = build_problem(cfg).mesh
    base = build_problem(cfg, perturbed=False).mesh
    r_moved = np.linalg.norm(moved.vertices[moved.boundary_vertices], axis=1)
    assert np.allclose(r_moved, 1.1) and moved.checksum() != base.checksum()


def test_short_optimization_is_monotone(tmp_path):
    doc = toy_focusing_config(resolution=6, N=60)
    doc["time"]["T"] = 1.2
    doc["cost"]["window"] = [0.0, 1.2]
    doc["optimization"]["max_iters"] = 3
    hist = run_optimization(config_from_dict(doc), tmp_path)
    J = hist.J
    assert len(hist) >= 2 and np.all(np.diff(J) < 0)
    assert hist.status in ("max_iters", "converged", "stalled")
    final = read_mesh(tmp_path / "final_mesh.txt")
    assert final.checksum() == hist.final_mesh.checksum()
    rows = list(hist.rows())
    assert len(rows[0]) == len(hist.header)
