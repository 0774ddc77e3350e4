"""Reference meshes, boundary geometry and admissible deformation fields.

Meshes are conforming P1 triangulations of a planar domain with an explicit,
oriented boundary-edge list: every boundary edge ``(a, b)`` is stored in the
orientation it has inside its parent triangle, so the domain lies to the left
of ``a -> b`` and the outward normal is the edge tangent rotated clockwise.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import MeshError, SupportError

__all__ = [
    "Mesh",
    "BoundaryGeometry",
    "DeformationField",
    "BumpRecipe",
    "RingRecipe",
    "build_structured_mesh",
    "compute_boundary_geometry",
    "make_bump_field",
    "make_ring_field",
    "nodal_field",
    "boundary_loops",
    "min_angle",
]


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


def _extract_boundary(triangles, n_vertices):
    """Return oriented boundary edges and their parent triangles."""
    local = np.array([[0, 1], [1, 2], [2, 0]])
    edges = triangles[:, local].reshape(-1, 2)
    parent = np.repeat(np.arange(len(triangles)), 3)
    lo = np.minimum(edges[:, 0], edges[:, 1]).astype(np.int64)
    hi = np.maximum(edges[:, 0], edges[:, 1]).astype(np.int64)
    key = lo * n_vertices + hi
    _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
    mask = counts[inverse] == 1
    return edges[mask], parent[mask]


def _default_bbox(vertices, margin=0.5):
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    pad = margin * float(np.max(hi - lo))
    return (lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of the reference domain.

    Attributes
    ----------
    vertices : (n, 2) float array
    triangles : (m, 3) int array, counter-clockwise
    boundary_edges : (nb, 2) int array, oriented with the domain on the left
    boundary_edge_tri : (nb,) int array, parent triangle of each boundary edge
    hold_all_bbox : (xmin, ymin, xmax, ymax) of the hold-all box U
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_edge_tri: np.ndarray
    hold_all_bbox: tuple
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _freeze(np.asarray(self.vertices, dtype=float)))
        object.__setattr__(self, "triangles", _freeze(np.asarray(self.triangles, dtype=np.int64)))
        object.__setattr__(self, "boundary_edges",
                           _freeze(np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)))
        object.__setattr__(self, "boundary_edge_tri",
                           _freeze(np.asarray(self.boundary_edge_tri, dtype=np.int64)))
        object.__setattr__(self, "hold_all_bbox", tuple(float(v) for v in self.hold_all_bbox))
        if self.validate:
            self.check()

    @classmethod
    def from_triangles(cls, vertices, triangles, hold_all_bbox=None, orient=True):
        """Build a mesh and its boundary-edge list from raw connectivity."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if orient:
            neg = _signed_areas(vertices, triangles) < 0
            triangles[neg] = triangles[neg][:, [0, 2, 1]]
        edges, parent = _extract_boundary(triangles, len(vertices))
        if hold_all_bbox is None:
            hold_all_bbox = _default_bbox(vertices)
        return cls(vertices, triangles, edges, parent, hold_all_bbox)

    # basic sizes -------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def edge_lengths(self) -> np.ndarray:
        e = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(e[:, 0], e[:, 1])

    def mesh_size(self) -> float:
        """Longest edge over all triangles."""
        t = self.triangles
        v = self.vertices
        lengths = [np.linalg.norm(v[t[:, i]] - v[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return float(np.max(lengths))

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:16]

    def with_vertices(self, vertices, validate=True) -> "Mesh":
        """Same connectivity and hold-all box, moved vertices."""
        return Mesh(vertices, self.triangles, self.boundary_edges, self.boundary_edge_tri,
                    self.hold_all_bbox, validate=validate)

    def check(self):
        """Raise MeshError if any structural invariant is violated."""
        v, t = self.vertices, self.triangles
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        areas = self.areas
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} has non-positive signed area {areas[bad]:.3e}")
        be = self.boundary_edges
        if len(be) == 0:
            raise MeshError("mesh has no boundary edges")
        expected, parent = _extract_boundary(t, len(v))
        key = lambda e: set(map(tuple, np.sort(e, axis=1).tolist()))
        if key(expected) != key(be):
            raise MeshError("boundary_edges do not match the triangle boundary")
        for (a, b), tri in zip(be, self.boundary_edge_tri):
            tv = list(t[tri])
            i = tv.index(a) if a in tv else -1
            if i < 0 or tv[(i + 1) % 3] != b:
                raise MeshError(f"boundary edge ({a}, {b}) not oriented like its parent triangle {tri}")
        out_deg = np.bincount(be[:, 0], minlength=len(v))
        in_deg = np.bincount(be[:, 1], minlength=len(v))
        if np.any(out_deg > 1) or np.any(in_deg != out_deg):
            raise MeshError("boundary edges do not form simple closed loops")
        xmin, ymin, xmax, ymax = self.hold_all_bbox
        inside = (v[:, 0] > xmin) & (v[:, 0] < xmax) & (v[:, 1] > ymin) & (v[:, 1] < ymax)
        if not np.all(inside):
            raise MeshError("mesh is not strictly contained in the hold-all box")


def boundary_loops(mesh: Mesh) -> list:
    """Closed boundary loops as ordered vertex-index arrays (domain on the left)."""
    nxt = {int(a): int(b) for a, b in mesh.boundary_edges}
    remaining = set(nxt)
    loops = []
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            remaining.discard(cur)
            cur = nxt[cur]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over all triangles, in degrees."""
    v = mesh.vertices[mesh.triangles]
    angles = []
    for i in range(3):
        a = v[:, (i + 1) % 3] - v[:, i]
        b = v[:, (i + 2) % 3] - v[:, i]
        cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return float(np.min(angles))


# ---------------------------------------------------------------------------
# structured meshes

def _square_mesh(n, x0=0.0, y0=0.0, width=1.0):
    xs = np.linspace(x0, x0 + width, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return verts, tris


def _zip_rings(inner_idx, inner_ang, outer_idx, outer_ang):
    """Triangulate the strip between two concentric rings of points."""
    tris = []
    ni, no = len(inner_idx), len(outer_idx)
    a = b = 0
    while a < ni or b < no:
        next_in = inner_ang[(a + 1) % ni] + (2 * np.pi if a + 1 >= ni else 0.0)
        next_out = outer_ang[(b + 1) % no] + (2 * np.pi if b + 1 >= no else 0.0)
        if b >= no or (a < ni and next_in < next_out):
            tris.append((inner_idx[a % ni], outer_idx[b % no], inner_idx[(a + 1) % ni]))
            a += 1
        else:
            tris.append((inner_idx[a % ni], outer_idx[b % no], outer_idx[(b + 1) % no]))
            b += 1
    return tris


def _disk_mesh(n, radius, center=(0.0, 0.0)):
    verts = [np.array([0.0, 0.0])]
    rings = [(np.array([0]), None)]
    tris = []
    for i in range(1, n + 1):
        m = 6 * i
        ang = 2 * np.pi * np.arange(m) / m
        r = radius * i / n
        start = len(verts)
        verts.extend(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
        idx = np.arange(start, start + m)
        if i == 1:
            tris.extend((0, idx[j], idx[(j + 1) % m]) for j in range(m))
        else:
            tris.extend(_zip_rings(rings[-1][0], rings[-1][1], idx, ang))
        rings.append((idx, ang))
    verts = np.array(verts) + np.asarray(center, dtype=float)
    return verts, np.array(tris, dtype=np.int64)


def _annular_sector_mesh(n, r_inner, r_outer, theta0, theta1):
    r_mid = 0.5 * (r_inner + r_outer)
    n_theta = max(2, int(round(n * (theta1 - theta0) * r_mid / (r_outer - r_inner))))
    rs = np.linspace(r_inner, r_outer, n + 1)
    ts = np.linspace(theta0, theta1, n_theta + 1)
    R, T = np.meshgrid(rs, ts, indexing="ij")
    verts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    idx = np.arange(verts.shape[0]).reshape(n + 1, n_theta + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return verts, tris


_SHAPES = ("unit_square", "disk", "annular_sector")


def build_structured_mesh(shape: str, resolution: int, *, radius: float = 1.0,
                          center=(0.0, 0.0), r_inner: float = 0.5, r_outer: float = 1.0,
                          theta0: float = 0.0, theta1: float = 0.5 * np.pi,
                          hold_all_margin: float = 0.5) -> Mesh:
    """Structured triangulation of one of the supported reference shapes.

    ``disk`` meshes use ``resolution`` concentric rings with ``6 i`` points on
    ring ``i``; boundary vertices lie exactly on the circle.
    """
    if shape not in _SHAPES:
        raise MeshError(f"unsupported shape {shape!r}; expected one of {_SHAPES}")
    if int(resolution) != resolution or resolution < 2:
        raise MeshError(f"resolution too small: {resolution} (need an integer >= 2)")
    resolution = int(resolution)
    if shape == "unit_square":
        verts, tris = _square_mesh(resolution)
    elif shape == "disk":
        if radius <= 0:
            raise MeshError("disk radius must be positive")
        verts, tris = _disk_mesh(resolution, radius, center)
    else:
        if not (0 < r_inner < r_outer) or not (theta0 < theta1 <= theta0 + np.pi):
            raise MeshError("invalid annular sector parameters")
        verts, tris = _annular_sector_mesh(resolution, r_inner, r_outer, theta0, theta1)
    return Mesh.from_triangles(verts, tris, _default_bbox(verts, hold_all_margin))


# ---------------------------------------------------------------------------
# boundary geometry

@dataclass(frozen=True, eq=False)
class BoundaryGeometry:
    """Per-boundary-vertex normals, turning-angle curvature and arc weights.

    All arrays are indexed like ``vertex_ids``.
    """

    vertex_ids: np.ndarray
    outward_normal: np.ndarray
    tangent: np.ndarray
    curvature: np.ndarray
    turning_angle: np.ndarray
    arc_weight: np.ndarray
    is_corner: np.ndarray
    prev_vertex: np.ndarray
    next_vertex: np.ndarray
    edge_normals: np.ndarray

    @property
    def perimeter(self) -> float:
        return float(self.arc_weight.sum())

    def position(self, vertex):
        """Row of ``vertex`` in the per-boundary-vertex arrays."""
        return int(np.searchsorted(self.vertex_ids, vertex))


def compute_boundary_geometry(mesh: Mesh, corner_angle: float = np.pi / 4) -> BoundaryGeometry:
    """Normals, curvature and lumped arc weights at every boundary vertex.

    Curvature is the signed turning angle between the incoming and outgoing
    boundary edges divided by their mean length; vertices whose turning angle
    exceeds ``corner_angle`` in magnitude are flagged as corners.
    """
    v = mesh.vertices
    be = mesh.boundary_edges
    t = v[be[:, 1]] - v[be[:, 0]]
    length = np.hypot(t[:, 0], t[:, 1])
    if np.any(length <= 0):
        raise MeshError("degenerate (zero-length) boundary edge")
    t_unit = t / length[:, None]
    e_normal = np.column_stack([t_unit[:, 1], -t_unit[:, 0]])

    ids = np.unique(be)
    pos = {int(k): i for i, k in enumerate(ids)}
    n_b = len(ids)
    e_in = np.empty(n_b, dtype=np.int64)
    e_out = np.empty(n_b, dtype=np.int64)
    for e, (a, b) in enumerate(be):
        e_out[pos[int(a)]] = e
        e_in[pos[int(b)]] = e

    ti, to = t_unit[e_in], t_unit[e_out]
    cross = ti[:, 0] * to[:, 1] - ti[:, 1] * to[:, 0]
    dot = np.einsum("ij,ij->i", ti, to)
    turning = np.arctan2(cross, dot)
    avg_len = 0.5 * (length[e_in] + length[e_out])
    curvature = turning / avg_len

    nsum = e_normal[e_in] + e_normal[e_out]
    nnorm = np.linalg.norm(nsum, axis=1)
    if np.any(nnorm < 1e-12):
        raise MeshError("boundary folds back on itself (cusp)")
    normal = nsum / nnorm[:, None]
    tangent = np.column_stack([-normal[:, 1], normal[:, 0]])

    return BoundaryGeometry(
        vertex_ids=_freeze(ids),
        outward_normal=_freeze(normal),
        tangent=_freeze(tangent),
        curvature=_freeze(curvature),
        turning_angle=_freeze(turning),
        arc_weight=_freeze(avg_len),
        is_corner=_freeze(np.abs(turning) > corner_angle),
        prev_vertex=_freeze(be[e_in, 0]),
        next_vertex=_freeze(be[e_out, 1]),
        edge_normals=_freeze(e_normal),
    )


# ---------------------------------------------------------------------------
# deformation fields

class FieldRecipe:
    """Analytic vector field on the plane with its Jacobian."""

    def value(self, points):  # pragma: no cover - interface
        raise NotImplementedError

    def jacobian(self, points):  # pragma: no cover - interface
        """(m, 2, 2) array with ``J[:, i, j] = d h_i / d x_j``."""
        raise NotImplementedError

    def support_radius_bounds(self):
        """(center, inner, outer): the field vanishes outside inner <= |x-center| <= outer."""
        raise NotImplementedError  # pragma: no cover


@dataclass(frozen=True)
class BumpRecipe(FieldRecipe):
    """``amplitude * (1 - |x-c|^2/radius^2)^3`` inside the ball, zero outside (C^2)."""

    center: tuple
    radius: float
    amplitude: tuple

    def _s(self, points):
        diff = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        s = np.einsum("ij,ij->i", diff, diff) / self.radius ** 2
        return diff, s

    def value(self, points):
        _, s = self._s(points)
        prof = np.where(s < 1.0, (1.0 - np.minimum(s, 1.0)) ** 3, 0.0)
        return prof[:, None] * np.asarray(self.amplitude, dtype=float)[None, :]

    def jacobian(self, points):
        diff, s = self._s(points)
        dprof = np.where(s < 1.0, -3.0 * (1.0 - np.minimum(s, 1.0)) ** 2, 0.0)
        grad = (2.0 / self.radius ** 2) * dprof[:, None] * diff
        amp = np.asarray(self.amplitude, dtype=float)
        return amp[None, :, None] * grad[:, None, :]

    def support_radius_bounds(self):
        return tuple(self.center), 0.0, float(self.radius)


def _ring_profile(r, r_inner, r_outer):
    mid = 0.5 * (r_inner + r_outer)
    half = 0.5 * (r_outer - r_inner)
    z = (r - mid) / half
    inside = np.abs(z) < 1.0
    zc = np.where(inside, z, 0.0)
    beta = np.where(inside, (1.0 - zc ** 2) ** 3, 0.0)
    dbeta = np.where(inside, -6.0 * zc * (1.0 - zc ** 2) ** 2 / half, 0.0)
    return beta, dbeta


@dataclass(frozen=True)
class RingRecipe(FieldRecipe):
    """Field supported on an annulus around ``center``.

    ``h = beta(r) * (a(theta) e_r + swirl e_theta)`` with a C^2 radial profile
    ``beta`` and ``a(theta) = radial * (1 + mode_amp * cos(mode * (theta - phase)))``.
    """

    center: tuple
    r_inner: float
    r_outer: float
    radial: float = 1.0
    swirl: float = 0.0
    mode: int = 0
    mode_amp: float = 0.0
    phase: float = 0.0

    def _polar(self, points):
        diff = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        r = np.hypot(diff[:, 0], diff[:, 1])
        theta = np.arctan2(diff[:, 1], diff[:, 0])
        return r, theta

    def _angular(self, theta):
        arg = self.mode * (theta - self.phase)
        a = self.radial * (1.0 + self.mode_amp * np.cos(arg))
        da = -self.radial * self.mode_amp * self.mode * np.sin(arg)
        return a, da

    def value(self, points):
        r, theta = self._polar(points)
        beta, _ = _ring_profile(r, self.r_inner, self.r_outer)
        a, _ = self._angular(theta)
        er = np.column_stack([np.cos(theta), np.sin(theta)])
        et = np.column_stack([-np.sin(theta), np.cos(theta)])
        return beta[:, None] * (a[:, None] * er + self.swirl * et)

    def jacobian(self, points):
        r, theta = self._polar(points)
        beta, dbeta = _ring_profile(r, self.r_inner, self.r_outer)
        a, da = self._angular(theta)
        er = np.column_stack([np.cos(theta), np.sin(theta)])
        et = np.column_stack([-np.sin(theta), np.cos(theta)])
        dh_dr = dbeta[:, None] * (a[:, None] * er + self.swirl * et)
        dh_dt = beta[:, None] * (da[:, None] * er + a[:, None] * et - self.swirl * er)
        safe_r = np.where(r > 0, r, 1.0)
        c, s = np.cos(theta), np.sin(theta)
        dx = dh_dr * c[:, None] - dh_dt * (s / safe_r)[:, None]
        dy = dh_dr * s[:, None] + dh_dt * (c / safe_r)[:, None]
        return np.stack([dx, dy], axis=2)

    def support_radius_bounds(self):
        return tuple(self.center), float(self.r_inner), float(self.r_outer)


@dataclass(frozen=True)
class CombinedRecipe(FieldRecipe):
    """Linear combination of analytic recipes."""

    terms: tuple  # ((coefficient, recipe), ...)

    def value(self, points):
        return sum(c * r.value(points) for c, r in self.terms)

    def jacobian(self, points):
        return sum(c * r.jacobian(points) for c, r in self.terms)


@dataclass(frozen=True, eq=False)
class DeformationField:
    """Vector field h sampled at mesh vertices, optionally with its analytic recipe."""

    values: np.ndarray
    recipe: Optional[FieldRecipe] = None
    support_descriptor: str = "unspecified"
    smoothness_tag: str = "nodal"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != 2:
            raise ValueError("deformation values must have shape (n, 2)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("deformation field contains NaN or Inf")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def has_recipe(self) -> bool:
        return self.recipe is not None

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def __mul__(self, alpha):
        alpha = float(alpha)
        recipe = None if self.recipe is None else CombinedRecipe(((alpha, self.recipe),))
        return DeformationField(alpha * self.values, recipe, self.support_descriptor, self.smoothness_tag)

    __rmul__ = __mul__

    def __add__(self, other: "DeformationField"):
        recipe = None
        if self.recipe is not None and other.recipe is not None:
            recipe = CombinedRecipe(((1.0, self.recipe), (1.0, other.recipe)))
        tag = self.smoothness_tag if self.smoothness_tag == other.smoothness_tag else "combined"
        return DeformationField(self.values + other.values, recipe,
                                f"{self.support_descriptor} + {other.support_descriptor}", tag)

    def check_vanishes_on(self, vertex_ids, what="protected region", atol=0.0):
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        if vertex_ids.size and np.max(np.abs(self.values[vertex_ids])) > atol:
            raise SupportError(f"deformation field does not vanish on the {what}")


def _check_ball_in_box(center, radius, mesh: Mesh):
    xmin, ymin, xmax, ymax = mesh.hold_all_bbox
    cx, cy = center
    if cx - radius <= xmin or cx + radius >= xmax or cy - radius <= ymin or cy + radius >= ymax:
        raise SupportError("field support intersects the hold-all boundary")


def make_bump_field(center, radius: float, amplitude, mesh: Mesh) -> DeformationField:
    """C^2 radial bump of the given radius, sampled at the mesh vertices."""
    if radius <= 0:
        raise ValueError("bump radius must be positive")
    center = tuple(float(c) for c in center)
    _check_ball_in_box(center, radius, mesh)
    recipe = BumpRecipe(center, float(radius), tuple(float(a) for a in amplitude))
    return DeformationField(recipe.value(mesh.vertices), recipe,
                            f"ball(center={center}, radius={radius})", "analytic-bump")


def make_ring_field(mesh: Mesh, center=(0.0, 0.0), r_inner=0.5, r_outer=1.4, radial=1.0,
                    swirl=0.0, mode=0, mode_amp=0.0, phase=0.0) -> DeformationField:
    """Annulus-supported field, radial plus optional swirl and angular modulation."""
    if not 0 < r_inner < r_outer:
        raise ValueError("ring radii must satisfy 0 < r_inner < r_outer")
    center = tuple(float(c) for c in center)
    _check_ball_in_box(center, r_outer, mesh)
    recipe = RingRecipe(center, float(r_inner), float(r_outer), float(radial), float(swirl),
                        int(mode), float(mode_amp), float(phase))
    return DeformationField(recipe.value(mesh.vertices), recipe,
                            f"annulus(center={center}, r=[{r_inner}, {r_outer}])", "analytic-ring")


def nodal_field(values, support_descriptor="nodal", smoothness_tag="boundary-density-lift"):
    """Deformation field known only through its vertex values (P1)."""
    return DeformationField(np.asarray(values, dtype=float), None, support_descriptor, smoothness_tag)
