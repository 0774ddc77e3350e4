"""P1 finite-element assembly with variable scalar and matrix coefficients.

Coefficients are passed either as nodal arrays (interpolated to quadrature
points), as per-quadrature-point arrays of shape ``(m, q, ...)`` or as
constants. Operators are returned as scipy CSR matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import DeformationField, Mesh
from .transform import eval_transform, p1_gradients

__all__ = [
    "FeSpace",
    "MappedCoefficients",
    "assemble_weighted_mass",
    "assemble_matrix_stiffness",
    "assemble_convective",
    "assemble_boundary_load",
    "assemble_boundary_mass",
    "map_coefficients",
]

# 3-point interior rule, exact for quadratics
_TRI_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_TRI_W = np.full(3, 1 / 3)
# 2-point Gauss on [0, 1]
_EDGE_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_W = np.array([0.5, 0.5])


class _Pattern:
    """Maps flattened element-matrix entries onto CSR storage."""

    def __init__(self, rows, cols, n):
        key = rows.astype(np.int64) * n + cols.astype(np.int64)
        uniq, self.inverse = np.unique(key, return_inverse=True)
        self.n = n
        r = uniq // n
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(n + 1)).astype(np.int32)
        self.nnz = len(uniq)

    def build(self, values):
        data = np.bincount(self.inverse, weights=values.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


@dataclass(frozen=True, eq=False)
class FeSpace:
    """P1 space on a mesh with fixed volume and boundary quadrature rules."""

    mesh: Mesh

    @property
    def dof_count(self) -> int:
        return self.mesh.n_vertices

    @property
    def quadrature(self):
        return {"kind": "triangle-3pt", "order": 2, "bary": _TRI_BARY, "weights": _TRI_W}

    @property
    def boundary_quadrature(self):
        return {"kind": "gauss-2pt", "order": 3, "s": _EDGE_S, "weights": _EDGE_W}

    # element geometry ---------------------------------------------------
    @cached_property
    def _geom(self):
        return p1_gradients(self.mesh)

    @property
    def areas(self):
        return self._geom[0]

    @property
    def grads(self):
        """(m, 3, 2) constant gradients of the local hat functions."""
        return self._geom[1]

    @cached_property
    def qweights(self):
        """(m, q) physical quadrature weights."""
        return self.areas[:, None] * _TRI_W[None, :]

    @cached_property
    def qpoints(self):
        v = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qk,mkc->mqc", _TRI_BARY, v)

    @cached_property
    def qelements(self):
        return np.repeat(np.arange(self.mesh.n_triangles), len(_TRI_W))

    # boundary geometry ---------------------------------------------------
    @cached_property
    def edge_vertices(self):
        return self.mesh.boundary_edges

    @cached_property
    def edge_lengths(self):
        return self.mesh.edge_lengths()

    @cached_property
    def edge_normals(self):
        v = self.mesh.vertices
        e = v[self.edge_vertices[:, 1]] - v[self.edge_vertices[:, 0]]
        e = e / np.linalg.norm(e, axis=1)[:, None]
        return np.column_stack([e[:, 1], -e[:, 0]])

    @cached_property
    def bqweights(self):
        return self.edge_lengths[:, None] * _EDGE_W[None, :]

    @cached_property
    def bqpoints(self):
        v = self.mesh.vertices
        a = v[self.edge_vertices[:, 0]]
        b = v[self.edge_vertices[:, 1]]
        return a[:, None, :] + _EDGE_S[None, :, None] * (b - a)[:, None, :]

    @cached_property
    def _edge_bary_in_parent(self):
        """Barycentric coordinates of boundary quadrature points in the parent triangle."""
        tris = self.mesh.triangles[self.mesh.boundary_edge_tri]
        nb = len(tris)
        bary = np.zeros((nb, len(_EDGE_S), 3))
        for e in range(nb):
            a, b = self.edge_vertices[e]
            ia = int(np.where(tris[e] == a)[0][0])
            ib = int(np.where(tris[e] == b)[0][0])
            bary[e, :, ia] = 1.0 - _EDGE_S
            bary[e, :, ib] = _EDGE_S
        return bary

    # sparsity ------------------------------------------------------------
    @cached_property
    def _vol_pattern(self):
        t = self.mesh.triangles
        rows = np.repeat(t[:, :, None], 3, axis=2)
        cols = np.repeat(t[:, None, :], 3, axis=1)
        return _Pattern(rows.ravel(), cols.ravel(), self.dof_count)

    @cached_property
    def _edge_pattern(self):
        e = self.edge_vertices
        rows = np.repeat(e[:, :, None], 2, axis=2)
        cols = np.repeat(e[:, None, :], 2, axis=1)
        return _Pattern(rows.ravel(), cols.ravel(), self.dof_count)

    # field helpers -------------------------------------------------------
    def to_quad(self, nodal):
        """Interpolate a nodal field to volume quadrature points, shape (m, q)."""
        return np.asarray(nodal)[self.mesh.triangles] @ _TRI_BARY.T

    def to_bquad(self, nodal):
        """Interpolate a nodal field to boundary quadrature points, shape (nb, qb)."""
        nodal = np.asarray(nodal)
        a = nodal[self.edge_vertices[:, 0]]
        b = nodal[self.edge_vertices[:, 1]]
        return a[:, None] * (1.0 - _EDGE_S)[None, :] + b[:, None] * _EDGE_S[None, :]

    def element_gradient(self, nodal):
        """Constant gradient of the P1 interpolant per element, shape (m, 2)."""
        return np.einsum("mk,mkc->mc", np.asarray(nodal)[self.mesh.triangles], self.grads)

    def recovered_gradient(self, nodal):
        """Area-weighted average of adjacent element gradients at each vertex."""
        g = self.element_gradient(nodal)
        acc = np.zeros((self.dof_count, 2))
        wsum = np.zeros(self.dof_count)
        for k in range(3):
            np.add.at(acc, self.mesh.triangles[:, k], self.areas[:, None] * g)
            np.add.at(wsum, self.mesh.triangles[:, k], self.areas)
        return acc / wsum[:, None]

    @cached_property
    def mass(self):
        return assemble_weighted_mass(self, 1.0)

    @cached_property
    def stiffness(self):
        return assemble_matrix_stiffness(self, np.eye(2))

    def l2_norm(self, nodal) -> float:
        nodal = np.asarray(nodal)
        return float(np.sqrt(max(nodal @ (self.mass @ nodal), 0.0)))

    def integrate(self, nodal) -> float:
        return float(np.sum(self.qweights * self.to_quad(nodal)))


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"NaN or Inf in {what}")


def _scalar_at_quad(space: FeSpace, coeff):
    coeff = np.asarray(coeff, dtype=float)
    m = space.mesh.n_triangles
    if coeff.ndim == 0:
        return np.full((m, len(_TRI_W)), float(coeff))
    if coeff.shape == (space.dof_count,):
        return space.to_quad(coeff)
    if coeff.shape == (m, len(_TRI_W)):
        return coeff
    raise ValueError(f"coefficient of shape {coeff.shape} is neither nodal nor per-quadrature-point")


def _matrix_at_quad(space: FeSpace, Mfield):
    Mfield = np.asarray(Mfield, dtype=float)
    m, q = space.mesh.n_triangles, len(_TRI_W)
    if Mfield.shape == (2, 2):
        return np.broadcast_to(Mfield, (m, q, 2, 2))
    if Mfield.shape == (m, 2, 2):
        return np.broadcast_to(Mfield[:, None], (m, q, 2, 2))
    if Mfield.shape == (m, q, 2, 2):
        return Mfield
    if Mfield.shape == (m * q, 2, 2):
        return Mfield.reshape(m, q, 2, 2)
    raise ValueError(f"matrix field of shape {Mfield.shape} not understood")


def _boundary_at_quad(space: FeSpace, values):
    values = np.asarray(values, dtype=float)
    nb, qb = len(space.edge_vertices), len(_EDGE_S)
    if values.ndim == 0:
        return np.full((nb, qb), float(values))
    if values.shape == (space.dof_count,):
        return space.to_bquad(values)
    if values.shape == (nb, qb):
        return values
    raise ValueError(f"boundary data of shape {values.shape} not understood")


def assemble_weighted_mass(space: FeSpace, coeff) -> sp.csr_matrix:
    """``A_ij = int coeff phi_i phi_j dx``."""
    cq = _scalar_at_quad(space, coeff)
    _check_finite(cq, "mass coefficient")
    local = np.einsum("mq,qi,qj->mij", cq * space.qweights, _TRI_BARY, _TRI_BARY)
    return space._vol_pattern.build(local)


def assemble_matrix_stiffness(space: FeSpace, Mfield, sym_tol=1e-10) -> sp.csr_matrix:
    """``K_ij = int (Mfield grad phi_j) . grad phi_i dx``."""
    Mq = _matrix_at_quad(space, Mfield)
    _check_finite(Mq, "stiffness coefficient")
    asym = np.max(np.abs(Mq[..., 0, 1] - Mq[..., 1, 0]))
    if asym > sym_tol * max(1.0, float(np.max(np.abs(Mq)))):
        raise ValueError(f"matrix coefficient is not symmetric (deviation {asym:.2e})")
    Mbar = np.einsum("mq,mqab->mab", space.qweights, Mq)
    local = np.einsum("mia,mab,mjb->mij", space.grads, Mbar, space.grads)
    return space._vol_pattern.build(local)


def assemble_convective(space: FeSpace, gradpsi, Mfield=None) -> sp.csr_matrix:
    """``C_ij = int (Mfield grad phi_j . gradpsi) phi_i dx`` (non-symmetric)."""
    m, q = space.mesh.n_triangles, len(_TRI_W)
    gradpsi = np.asarray(gradpsi, dtype=float)
    if gradpsi.shape == (m, 2):
        gq = np.broadcast_to(gradpsi[:, None, :], (m, q, 2))
    elif gradpsi.shape == (m, q, 2):
        gq = gradpsi
    else:
        raise ValueError(f"gradient field of shape {gradpsi.shape} not understood")
    _check_finite(gq, "convective field")
    if Mfield is None:
        Mg = gq
    else:
        Mq = _matrix_at_quad(space, Mfield)
        Mg = np.einsum("mqab,mqb->mqa", Mq, gq)  # M symmetric: M grad phi . g = grad phi . M g
    # sum_q w_q phi_i(q) (grad phi_j . Mg_q)
    weighted = np.einsum("mq,qi,mqa->mia", space.qweights, _TRI_BARY, Mg)
    local = np.einsum("mia,mja->mij", weighted, space.grads)
    return space._vol_pattern.build(local)


def assemble_boundary_load(space: FeSpace, wfield, data) -> np.ndarray:
    """``b_i = int_{boundary} wfield data phi_i dgamma``; zero at interior dofs."""
    wq = _boundary_at_quad(space, wfield)
    dq = _boundary_at_quad(space, data)
    prod = wq * dq * space.bqweights
    _check_finite(prod, "boundary load")
    out = np.zeros(space.dof_count)
    np.add.at(out, space.edge_vertices[:, 0], prod @ (1.0 - _EDGE_S))
    np.add.at(out, space.edge_vertices[:, 1], prod @ _EDGE_S)
    return out


def assemble_boundary_mass(space: FeSpace, coeff) -> sp.csr_matrix:
    """``B_ij = int_{boundary} coeff phi_i phi_j dgamma``."""
    cq = _boundary_at_quad(space, coeff)
    _check_finite(cq, "boundary mass coefficient")
    shape = np.column_stack([1.0 - _EDGE_S, _EDGE_S])  # (qb, 2)
    local = np.einsum("eq,qi,qj->eij", cq * space.bqweights, shape, shape)
    return space._edge_pattern.build(local)


@dataclass(frozen=True, eq=False)
class MappedCoefficients:
    """Transform weights at the quadrature points of a space.

    ``det_I`` and ``M`` live on volume quadrature points, ``w`` and
    ``boundary_points`` (the mapped points F_d(x) where Neumann data are read)
    on boundary quadrature points.
    """

    d: float
    det_I: np.ndarray
    M: np.ndarray
    w: np.ndarray
    boundary_points: np.ndarray
    volume_points: np.ndarray

    @classmethod
    def identity(cls, space: FeSpace):
        m, q = space.qweights.shape
        nb, qb = space.bqweights.shape
        return cls(0.0, np.ones((m, q)), np.broadcast_to(np.eye(2), (m, q, 2, 2)).copy(),
                   np.ones((nb, qb)), space.bqpoints.copy(), space.qpoints.copy())


def map_coefficients(space: FeSpace, h: DeformationField, d: float, mode: str = "auto") -> MappedCoefficients:
    """Evaluate I_d, M_d, w_d and F_d at every quadrature point of ``space``.

    ``mode="p1"`` uses element-wise gradients of the nodal field, which makes the
    transformed problem algebraically identical to the problem posed on the
    moved mesh.
    """
    mesh = space.mesh
    m, q = space.qweights.shape
    pts = space.qpoints.reshape(-1, 2)
    elems = space.qelements
    bary = np.tile(_TRI_BARY, (m, 1))
    vol = eval_transform(h, d, pts, mesh=mesh, elements=elems, bary=bary, mode=mode)

    nb, qb = space.bqweights.shape
    bpts = space.bqpoints.reshape(-1, 2)
    belems = np.repeat(mesh.boundary_edge_tri, qb)
    bbary = space._edge_bary_in_parent.reshape(-1, 3)
    normals = np.repeat(space.edge_normals, qb, axis=0)
    bnd = eval_transform(h, d, bpts, normals, mesh=mesh, elements=belems, bary=bbary, mode=mode)
    return MappedCoefficients(
        float(d),
        vol.det_I.reshape(m, q),
        vol.M.reshape(m, q, 2, 2),
        bnd.w.reshape(nb, qb),
        bnd.F.reshape(nb, qb, 2),
        vol.F.reshape(m, q, 2),
    )
