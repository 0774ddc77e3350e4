"""Perturbation-of-identity quantities F_d = id + d h and their derivatives.

For a deformation field h and magnitude d the pointwise quantities are::

    DF_d = I + d Jh              (Jh[i, j] = dh_i/dx_j)
    I_d  = det DF_d
    A_d  = DF_d^{-T}
    M_d  = I_d A_d^T A_d
    w_d  = I_d |A_d n|

Jh comes from the analytic recipe of the field when one is attached, otherwise
from element-wise gradients of its P1 interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DeformationTooLarge
from .geometry import DeformationField, Mesh

__all__ = [
    "TransformCoefficients",
    "MPrimeField",
    "locate_points",
    "field_jacobian",
    "field_values",
    "eval_transform",
    "eval_M_prime",
    "transform_derivatives_at_zero",
    "pushforward_compose",
]

_EYE = np.eye(2)


def p1_gradients(mesh: Mesh):
    """Areas and constant hat-function gradients, shape (m, 3, 2)."""
    v = mesh.vertices[mesh.triangles]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of inv(B^T) applied to reference gradients (-1,-1), (1,0), (0,1)
    inv = np.empty((len(v), 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("kr,mrc->mkc", ref, inv)
    return 0.5 * det, grads


def locate_points(mesh: Mesh, points, tol=1e-12):
    """Containing triangle and barycentric coordinates for each point."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    v = mesh.vertices[mesh.triangles]
    p0 = v[:, 0]
    e1 = v[:, 1] - p0
    e2 = v[:, 2] - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    elems = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    for start in range(0, len(points), 256):
        chunk = points[start:start + 256]
        rel = chunk[:, None, :] - p0[None, :, :]
        l1 = (rel[..., 0] * e2[None, :, 1] - rel[..., 1] * e2[None, :, 0]) / det[None, :]
        l2 = (e1[None, :, 0] * rel[..., 1] - e1[None, :, 1] * rel[..., 0]) / det[None, :]
        l0 = 1.0 - l1 - l2
        worst = np.minimum(np.minimum(l0, l1), l2)
        best = np.argmax(worst, axis=1)
        rows = np.arange(len(chunk))
        ok = worst[rows, best] >= -tol
        elems[start:start + len(chunk)] = np.where(ok, best, -1)
        bary[start:start + len(chunk)] = np.column_stack([l0[rows, best], l1[rows, best], l2[rows, best]])
    if np.any(elems < 0):
        raise ValueError("some evaluation points lie outside the mesh")
    return elems, bary


def _resolve_mode(h: DeformationField, mode: str) -> str:
    if mode == "auto":
        return "analytic" if h.has_recipe else "p1"
    if mode == "analytic" and not h.has_recipe:
        raise ValueError("analytic gradient requested for a field without a recipe")
    if mode not in ("analytic", "p1"):
        raise ValueError(f"unknown gradient mode {mode!r}")
    return mode


def field_jacobian(h: DeformationField, points, mesh: Optional[Mesh] = None, elements=None,
                   mode: str = "auto") -> np.ndarray:
    """Jacobian ``Jh[:, i, j] = dh_i/dx_j`` at the given points."""
    mode = _resolve_mode(h, mode)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if mode == "analytic":
        return h.recipe.jacobian(points)
    if mesh is None:
        raise ValueError("P1 gradients need the mesh")
    if elements is None:
        elements, _ = locate_points(mesh, points)
    _, grads = p1_gradients(mesh)
    vals = h.values[mesh.triangles[elements]]  # (m, 3, 2)
    return np.einsum("mki,mkj->mij", vals, grads[elements])


def field_values(h: DeformationField, points, mesh: Optional[Mesh] = None, elements=None,
                 bary=None, mode: str = "auto") -> np.ndarray:
    mode = _resolve_mode(h, mode)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if mode == "analytic":
        return h.recipe.value(points)
    if mesh is None:
        raise ValueError("P1 evaluation needs the mesh")
    if elements is None or bary is None:
        elements, bary = locate_points(mesh, points)
    return np.einsum("mk,mki->mi", bary, h.values[mesh.triangles[elements]])


@dataclass(frozen=True, eq=False)
class TransformCoefficients:
    """Pointwise method-of-mappings coefficients for one value of d."""

    d: float
    F: np.ndarray
    DF: np.ndarray
    det_I: np.ndarray
    A: np.ndarray
    M: np.ndarray
    w: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class MPrimeField:
    Mp: np.ndarray


def _coefficients(d, points, hvals, jac, normals):
    DF = _EYE[None] + d * jac
    det = DF[:, 0, 0] * DF[:, 1, 1] - DF[:, 0, 1] * DF[:, 1, 0]
    if np.any(det <= 0) or not np.all(np.isfinite(det)):
        bad = int(np.argmin(det))
        raise DeformationTooLarge(f"deformation too large: det DF_d = {det[bad]:.3e} at point {bad}")
    # A = DF^{-T}
    A = np.empty_like(DF)
    A[:, 0, 0] = DF[:, 1, 1] / det
    A[:, 0, 1] = -DF[:, 1, 0] / det
    A[:, 1, 0] = -DF[:, 0, 1] / det
    A[:, 1, 1] = DF[:, 0, 0] / det
    M = det[:, None, None] * np.einsum("mki,mkj->mij", A, A)
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    w = None
    if normals is not None:
        An = np.einsum("mij,mj->mi", A, normals)
        w = det * np.linalg.norm(An, axis=1)
    return TransformCoefficients(float(d), points + d * hvals, DF, det, A, M, w)


def eval_transform(h: DeformationField, d: float, points, normals=None, *, mesh=None,
                   elements=None, bary=None, mode: str = "auto",
                   require_w: bool = False) -> TransformCoefficients:
    """Evaluate F_d, DF_d, I_d, A_d, M_d (and w_d when normals are given).

    Raises DeformationTooLarge when det DF_d <= 0 at any point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if require_w and normals is None:
        raise ValueError("normals are required to evaluate w_d")
    if normals is not None:
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        if normals.shape != points.shape:
            raise ValueError("one normal per evaluation point is required")
    mode = _resolve_mode(h, mode)
    if mode == "p1" and (elements is None or bary is None):
        elements, bary = locate_points(mesh, points)
    jac = field_jacobian(h, points, mesh, elements, mode)
    hvals = field_values(h, points, mesh, elements, bary, mode)
    return _coefficients(d, points, hvals, jac, normals)


def m_prime_from_jacobian(jac):
    div = jac[:, 0, 0] + jac[:, 1, 1]
    return div[:, None, None] * _EYE[None] - jac - np.swapaxes(jac, 1, 2)


def eval_M_prime(h: DeformationField, points, *, mesh=None, elements=None,
                 mode: str = "auto") -> MPrimeField:
    """``Mp = I div h - Jh - Jh^T``, the d-derivative of M_d at d = 0."""
    jac = field_jacobian(h, points, mesh, elements, mode)
    return MPrimeField(m_prime_from_jacobian(jac))


def transform_derivatives_at_zero(h: DeformationField, points, normals=None, *, mesh=None,
                                  elements=None, mode: str = "auto") -> dict:
    """Analytic d-derivatives at d = 0.

    Returns ``dI = div h``, ``dw = div h - (Jh n) . n`` (only when normals are
    given) and ``dA_T = -Jh``.
    """
    jac = field_jacobian(h, points, mesh, elements, mode)
    div = jac[:, 0, 0] + jac[:, 1, 1]
    out = {"dI": div, "dA_T": -jac, "dw": None}
    if normals is not None:
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        out["dw"] = div - np.einsum("mi,mij,mj->m", normals, jac, normals)
    return out


def pushforward_compose(field_on_reference, h: DeformationField, d: float, mesh: Mesh):
    """Move every vertex x to x + d h(x) and carry nodal values along.

    Returns ``(deformed_mesh, values)``. Nodal values are unchanged because
    psi_d(F_d(x_i)) = psi^d(x_i).
    """
    values = np.array(field_on_reference, dtype=float, copy=True)
    if d == 0.0:
        return mesh, values
    moved = mesh.vertices + d * h.values
    tris = mesh.triangles
    p = moved[tris]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    if np.any(area <= 0):
        raise DeformationTooLarge("deformed mesh has an inverted triangle")
    return mesh.with_vertices(moved), values
