"""Global matrices and load vectors on an :class:`~ifecontrol.ifem.IFESpace`.

Side-aware data are callables ``f(points, side)`` where ``points`` has
shape (..., 2) and ``side`` broadcasts against ``points[..., 0]`` with
entries +1 (outside) or -1 (inside).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import segment_rule, triangle_rule
from .linalg_core import SparseCSR

__all__ = [
    "SparseSystem",
    "local_stiffness",
    "local_mass",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_volume_load",
    "interface_trace_matrix",
    "interface_point_matrix",
    "assemble_interface_load",
    "assemble_enrichment_correction",
    "apply_dirichlet",
]

VOLUME_DEGREE = 4
LINE_ORDER = 3


def local_stiffness(vertices, beta=1.0):
    """Textbook P1 stiffness matrix of one triangle."""
    V = np.asarray(vertices, dtype=float)
    M = np.column_stack([np.ones(3), V])
    G = np.linalg.inv(M)[1:].T
    area = 0.5 * abs(np.linalg.det(M))
    return beta * area * G @ G.T


def local_mass(vertices):
    V = np.asarray(vertices, dtype=float)
    area = 0.5 * abs(np.linalg.det(np.column_stack([np.ones(3), V])))
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


def _scatter(space, local):
    """Sum cell-local (K, K) blocks into a global CSR matrix."""
    nodes = space.cell_nodes
    K = nodes.shape[1]
    rows = np.repeat(nodes, K, axis=1).ravel()
    cols = np.tile(nodes, (1, K)).ravel()
    vals = local.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    n = space.num_nodes
    M = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    M.sum_duplicates()
    M.sort_indices()
    return M


def assemble_stiffness(space):
    """``sum over cells of beta * area * grad(phi_i) . grad(phi_j)``."""
    G = space.cell_grad
    local = np.einsum("c,ckd,cld->ckl", space.cell_beta * space.cell_area, G, G)
    return _scatter(space, local)


def _volume_points(space, degree=VOLUME_DEGREE):
    lam, w = triangle_rule(degree)
    pts = np.einsum("qv,cvd->cqd", lam, space.cell_tris)
    return pts, space.cell_area[:, None] * w[None, :]


def _cell_basis_at(space, pts):
    """Basis values (c, q, K) of each cell's active nodes at its points (c, q, 2)."""
    d = pts - space.cell_ref[:, None, :]
    return space.cell_val[:, None, :] + np.einsum("ckd,cqd->cqk", space.cell_grad, d)


def assemble_mass(space):
    pts, wts = _volume_points(space)
    B = _cell_basis_at(space, pts)
    local = np.einsum("cq,cqk,cql->ckl", wts, B, B)
    return _scatter(space, local)


def assemble_volume_load(space, f, degree=VOLUME_DEGREE):
    """``(f, phi_i)`` with ``f`` evaluated on the branch of each cell."""
    pts, wts = _volume_points(space, degree)
    vals = np.asarray(f(pts, space.cell_side[:, None]), dtype=float)
    vals = np.broadcast_to(vals, wts.shape)
    B = _cell_basis_at(space, pts)
    contrib = np.einsum("cq,cq,cqk->ck", wts, vals, B)
    nodes = space.cell_nodes
    keep = nodes >= 0
    return np.bincount(nodes[keep], weights=contrib[keep], minlength=space.num_nodes)


def interface_point_matrix(space, poly, order=LINE_ORDER):
    """Sparse matrix mapping nodal vectors to trace values at the Gauss
    points of every segment, rows ordered segment-major."""
    t, _ = segment_rule(order)
    pts = poly.p0[:, None, :] + t[None, :, None] * (poly.p1 - poly.p0)[:, None, :]
    ns, k = pts.shape[:2]
    cells = np.repeat(space.trace_cell[poly.owner], k)
    P = pts.reshape(-1, 2)
    vals = space.basis_values(cells, P)
    nodes = space.cell_nodes[cells]
    rows = np.repeat(np.arange(ns * k), nodes.shape[1])
    keep = nodes.ravel() >= 0
    M = sp.csr_matrix((vals.ravel()[keep], (rows[keep], nodes.ravel()[keep])),
                      shape=(ns * k, space.num_nodes))
    M.sum_duplicates()
    return M


def interface_trace_matrix(space, poly, order=LINE_ORDER):
    """``B[i, s] = integral of phi_i over segment s``; loads are ``B @ u``
    for a piecewise-constant control ``u``."""
    _, w = segment_rule(order)
    Q = interface_point_matrix(space, poly, order)
    ns = len(poly)
    W = sp.csr_matrix((np.outer(poly.lengths, w).ravel(),
                       (np.repeat(np.arange(ns), w.size), np.arange(ns * w.size))),
                      shape=(ns, ns * w.size))
    return (W @ Q).T.tocsr()


def assemble_interface_load(space, poly, u, order=LINE_ORDER):
    """``<u, phi_i>`` over the discrete interface.

    ``u`` is an array of per-segment constants, an object with a ``values``
    attribute, or a callable evaluated at the Gauss points (shape (ns, k, 2)).
    """
    if callable(u):
        t, w = segment_rule(order)
        pts = poly.p0[:, None, :] + t[None, :, None] * (poly.p1 - poly.p0)[:, None, :]
        vals = np.asarray(u(pts), dtype=float).ravel()
        weights = (poly.lengths[:, None] * w[None, :]).ravel()
        Q = interface_point_matrix(space, poly, order)
        return Q.T @ (weights * vals)
    vals = np.asarray(getattr(u, "values", u), dtype=float)
    if vals.shape != (len(poly),):
        raise ValueError(f"expected {len(poly)} segment values, got shape {vals.shape}")
    return interface_trace_matrix(space, poly, order) @ vals


def assemble_enrichment_correction(space, enrichment):
    """``-sum over interface cells of beta * grad(y_sigma) . grad(phi_i)``."""
    if enrichment is None or enrichment.is_zero():
        return np.zeros(space.num_nodes)
    w = space.cell_beta * space.cell_area
    contrib = -np.einsum("c,cd,ckd->ck", w, enrichment.cell_grad, space.cell_grad)
    nodes = space.cell_nodes
    keep = (nodes >= 0) & (np.abs(contrib) > 0)
    return np.bincount(nodes[keep], weights=contrib[keep], minlength=space.num_nodes)


@dataclass
class SparseSystem:
    """Reduced system over the free nodes after Dirichlet elimination."""

    matrix: SparseCSR
    rhs: np.ndarray
    dirichlet_values: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    num_nodes: int

    def expand(self, x_free):
        """Full nodal vector from free-node unknowns and the boundary data."""
        x = np.zeros(self.num_nodes)
        x[self.free] = x_free
        x[self.fixed] = self.dirichlet_values
        return x

    def residual_norm(self, x_free):
        return float(np.linalg.norm(self.matrix @ x_free - self.rhs))


def apply_dirichlet(A, rhs, fixed, values):
    """Eliminate the ``fixed`` nodes, lifting their ``values`` into the rhs."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    fixed = np.asarray(fixed, dtype=np.int64)
    g = np.broadcast_to(np.asarray(values, dtype=float), fixed.shape).copy()
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    Aff = A[free][:, free]
    Afb = A[free][:, fixed]
    b = np.asarray(rhs, dtype=float)[free] - Afb @ g
    return SparseSystem(SparseCSR.from_scipy(Aff), b, g, free, fixed, n)
