import json

import pytest
import yaml

from acoustic_shape import __version__
from acoustic_shape.cli import main
from acoustic_shape.driver import reference_disk_config


@pytest.fixture
def cfg_path(tmp_path):
    doc = reference_disk_config("linear", resolution=5, N=40)
    doc["time"]["T"] = 1.0
    doc["cost"]["window"] = [0.0, 1.0]
    doc["output"] = {"snapshot_every": 20}
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def _status(out):
    return json.loads((out / "status.json").read_text())


@pytest.mark.parametrize("cmd,files", [
    ("solve", ["state.csv", "vtk/state_00000.vtk", "vtk/state_00040.vtk"]),
    ("adjoint", ["state_adjoint.csv", "vtk/state_adjoint_00020.vtk"]),
    ("gradient", ["gradient_density.csv", "gradient_density.vtk"]),
    ("taylor-test", ["taylor.csv"]),
])
def test_subcommands_write_outputs(tmp_path, cfg_path, cmd, files):
    out = tmp_path / cmd
    assert main([cmd, "--config", str(cfg_path), "--out", str(out), "--threads", "2"]) == 0
    st = _status(out)
    assert st["status"] == "ok" and st["threads"] == 2 and st["final_J"] > 0
    assert json.loads((out / "version.json").read_text())["version"] == __version__
    assert (out / "config_echo.yaml").read_text() == cfg_path.read_text()
    for f in files:
        assert (out / f).is_file(), f


def test_gradient_reports_both_forms(tmp_path, cfg_path):
    out = tmp_path / "g"
    main(["gradient", "--config", str(cfg_path), "--out", str(out)])
    st = _status(out)
    assert abs(st["dJ_boundary"] - st["dJ_volume"]) < 0.2 * abs(st["dJ_volume"])


def test_check_subcommand(tmp_path, capsys):
    out = tmp_path / "check"
    assert main(["check", "--out", str(out), "--seed", "3"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(ln.startswith("[PASS]") for ln in lines)
    assert _status(out)["all_passed"] is True


def test_config_errors_exit_2(tmp_path, capsys):
    out = tmp_path / "bad"
    assert main(["solve", "--config", str(tmp_path / "nope.yaml"), "--out", str(out)]) == 2
    assert "ConfigError" in capsys.readouterr().err
    assert _status(out)["status"] == "config_error"
    assert main(["solve", "--out", str(out)]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"mesh": {"shape": "disk"}}))
    assert main(["optimize", "--config", str(bad), "--out", str(out)]) == 2


def test_runtime_error_exit_1(tmp_path, capsys):
    doc = reference_disk_config("westervelt", resolution=5, N=40, amplitude=5.0)
    doc["time"]["T"] = 1.0
    doc["cost"]["window"] = [0.0, 1.0]
    p = tmp_path / "hot.yaml"
    p.write_text(yaml.safe_dump(doc))
    out = tmp_path / "hot"
    assert main(["solve", "--config", str(p), "--out", str(out)]) == 1
    assert "DegeneracyError" in capsys.readouterr().err
    assert _status(out)["error_class"] == "DegeneracyError"


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
