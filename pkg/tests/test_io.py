import numpy as np
import pytest

from acoustic_shape.errors import MeshError
from acoustic_shape.geometry import build_structured_mesh
from acoustic_shape.io import (
    read_mesh,
    write_boundary_vtk,
    write_mesh,
    write_snapshots,
    write_table,
    write_trajectory_csv,
    write_vtk,
)


@pytest.mark.parametrize("shape", ["disk", "unit_square", "annular_sector"])
def test_mesh_round_trip(tmp_path, shape):
    mesh = build_structured_mesh(shape, 4)
    mesh = mesh.with_vertices(mesh.vertices + 1e-3 * np.sin(7 * mesh.vertices))
    write_mesh(mesh, tmp_path / "m.txt")
    back = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert np.array_equal(back.boundary_edge_tri, mesh.boundary_edge_tri)
    assert back.checksum() == mesh.checksum()


def test_read_mesh_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("something else\n")
    with pytest.raises(MeshError):
        read_mesh(p)
    mesh = build_structured_mesh("unit_square", 2)
    write_mesh(mesh, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(MeshError):
        read_mesh(p)
    lines[5] = "0.1 nope"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshError):
        read_mesh(p)


def test_vtk_writers(tmp_path):
    mesh = build_structured_mesh("unit_square", 2)
    write_vtk(tmp_path / "a.vtk", mesh, {"u": np.arange(9.0), "v": np.ones((9, 2))})
    text = (tmp_path / "a.vtk").read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert "POINTS 9 double" in text and "CELLS 8 32" in text and "POINT_DATA 9" in text
    assert "VECTORS v double" in text
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "b.vtk", mesh, {"u": np.ones(3)})
    ids = np.unique(mesh.boundary_edges)
    write_boundary_vtk(tmp_path / "c.vtk", mesh, ids, np.zeros(len(ids)))
    assert f"LINES 8 24" in (tmp_path / "c.vtk").read_text()


def test_tables_and_snapshots(tmp_path):
    t = np.linspace(0, 1, 5)
    write_trajectory_csv(tmp_path / "s.csv", t, np.ones(5), 0.9, {"probe": t ** 2})
    rows = (tmp_path / "s.csv").read_text().splitlines()
    assert rows[0] == "t,energy,margin,probe" and len(rows) == 6
    assert float(rows[-1].split(",")[3]) == 1.0
    write_table(tmp_path / "x.csv", ["a", "b"], [[1, 0.1], ["z", np.float64(0.2)]])
    assert (tmp_path / "x.csv").read_text().splitlines()[2] == "z,0.2"
    mesh = build_structured_mesh("unit_square", 2)
    files = write_snapshots(tmp_path / "vtk", "st", mesh, t, {"u": np.zeros((5, 9))}, every=2)
    assert [f.name for f in files] == ["st_00000.vtk", "st_00002.vtk", "st_00004.vtk"]
