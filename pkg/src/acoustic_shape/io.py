"""Plain-text mesh format, VTK legacy export and CSV tables."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import MeshError
from .geometry import Mesh

MESH_HEADER = "acoustic-mesh v1"


def write_mesh(mesh: Mesh, path):
    """Write the mesh as ``acoustic-mesh v1`` text.

    Layout: header; ``n_vertices n_triangles n_boundary_edges``; the hold-all
    box ``xmin ymin xmax ymax``; then one vertex, triangle or boundary edge
    (``a b parent_triangle``) per line.
    """
    path = Path(path)
    lines = [MESH_HEADER,
             f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}",
             " ".join(repr(float(v)) for v in mesh.hold_all_bbox)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges.tolist(),
                                                    mesh.boundary_edge_tri.tolist())]
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    text = Path(path).read_text().splitlines()
    rows = [ln.strip() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0] != MESH_HEADER:
        raise MeshError(f"{path}: not an {MESH_HEADER!r} file")
    try:
        nv, nt, nb = (int(x) for x in rows[1].split())
        bbox = tuple(float(x) for x in rows[2].split())
        body = rows[3:]
        if len(body) != nv + nt + nb or len(bbox) != 4:
            raise MeshError(f"{path}: entity counts do not match the header")
        verts = np.array([[float(x) for x in r.split()] for r in body[:nv]])
        tris = np.array([[int(x) for x in r.split()] for r in body[nv:nv + nt]], dtype=np.int64)
        bnd = np.array([[int(x) for x in r.split()] for r in body[nv + nt:]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    if verts.shape != (nv, 2) or tris.shape != (nt, 3) or bnd.shape != (nb, 3):
        raise MeshError(f"{path}: wrong number of columns")
    return Mesh(verts, tris, bnd[:, :2], bnd[:, 2], bbox)


def write_vtk(path, mesh: Mesh, point_data=None, title="acoustic_shape"):
    """Legacy ASCII unstructured grid with optional scalar/vector point data."""
    point_data = point_data or {}
    out = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {mesh.n_vertices} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {mesh.n_triangles}")
    out += ["5"] * mesh.n_triangles
    if point_data:
        out.append(f"POINT_DATA {mesh.n_vertices}")
    for name, arr in point_data.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape == (mesh.n_vertices,):
            out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [repr(v) for v in arr.tolist()]
        elif arr.shape == (mesh.n_vertices, 2):
            out.append(f"VECTORS {name} double")
            out += [f"{x!r} {y!r} 0.0" for x, y in arr.tolist()]
        else:
            raise ValueError(f"point data {name!r} has shape {arr.shape}")
    Path(path).write_text("\n".join(out) + "\n")


def write_boundary_vtk(path, mesh: Mesh, vertex_ids, values, name="density"):
    """Boundary polyline with one scalar per boundary vertex (legacy POLYDATA)."""
    vertex_ids = np.asarray(vertex_ids)
    local = {int(v): i for i, v in enumerate(vertex_ids)}
    pts = mesh.vertices[vertex_ids]
    out = ["# vtk DataFile Version 3.0", "boundary data", "ASCII", "DATASET POLYDATA",
           f"POINTS {len(pts)} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in pts.tolist()]
    edges = mesh.boundary_edges
    out.append(f"LINES {len(edges)} {3 * len(edges)}")
    out += [f"2 {local[int(a)]} {local[int(b)]}" for a, b in edges.tolist()]
    out += [f"POINT_DATA {len(pts)}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out += [repr(float(v)) for v in np.asarray(values).tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def write_trajectory_csv(path, times, energy=None, margin=None, probes=None):
    """Per-step table: time, energy, degeneracy margin and probe values.

    ``probes`` maps a column name to a length-(N+1) series.
    """
    probes = probes or {}
    header = ["t"]
    cols = [np.asarray(times)]
    if energy is not None:
        header.append("energy")
        cols.append(np.asarray(energy))
    if margin is not None:
        header.append("margin")
        cols.append(np.broadcast_to(np.asarray(margin, dtype=float), cols[0].shape))
    for name, series in probes.items():
        header.append(name)
        cols.append(np.asarray(series))
    write_table(path, header, zip(*[c.tolist() for c in cols]))


def write_snapshots(directory, stem, mesh: Mesh, times, fields: dict, every: int = 10):
    """VTK snapshot every ``every`` steps; ``fields`` maps names to (N+1, n) arrays."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for n in range(0, len(times), max(1, int(every))):
        path = directory / f"{stem}_{n:05d}.vtk"
        write_vtk(path, mesh, {k: v[n] for k, v in fields.items()}, f"{stem} t={times[n]:.6g}")
        written.append(path)
    return written
