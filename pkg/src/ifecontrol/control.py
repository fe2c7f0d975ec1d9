"""Controls living on the discrete interface."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import closest_point_on_interface, segment_rule

__all__ = [
    "ControlField",
    "project_box",
    "midpoint_interpolate",
    "l2_project_segments",
    "PostprocessedControl",
    "postprocess_control",
    "nearest_segment",
    "write_control_csv",
]


def project_box(v, u_a, u_b):
    """``min(u_b, max(u_a, v))``; pass ``None`` bounds for no clipping."""
    if u_a is not None and u_b is not None and u_a > u_b:
        raise ValueError(f"empty box: lower bound {u_a} exceeds upper bound {u_b}")
    out = np.asarray(v, dtype=float)
    if u_a is not None:
        out = np.maximum(out, u_a)
    if u_b is not None:
        out = np.minimum(out, u_b)
    return out if out.ndim else float(out)


@dataclass
class ControlField:
    """One value per segment of the interface polyline, in polyline order."""

    values: np.ndarray
    bounds: tuple | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.bounds is not None:
            lo, hi = self.bounds
            if lo >= hi:
                raise ValueError(f"bounds must satisfy u_a < u_b, got {self.bounds}")
            self.values = project_box(self.values, lo, hi)

    def __len__(self):
        return self.values.size

    def at_segments(self, pts):
        """Broadcast segment values over per-segment point arrays (ns, k, 2)."""
        return np.broadcast_to(self.values[:, None], pts.shape[:2])


def midpoint_interpolate(p_trace, poly, bounds=None):
    """Sample ``p_trace`` (a callable on (m, 2) points) at segment midpoints."""
    return ControlField(np.asarray(p_trace(poly.midpoints), dtype=float), bounds)


def l2_project_segments(v, poly, order=3, bounds=None):
    """Segment averages of ``v`` by ``order``-point Gauss quadrature."""
    t, w = segment_rule(order)
    pts = poly.p0[:, None, :] + t[None, :, None] * (poly.p1 - poly.p0)[:, None, :]
    vals = np.asarray(v(pts), dtype=float)
    return ControlField(vals @ w, bounds)


def nearest_segment(poly, pts, tree=None, k=8):
    """Index of the closest segment and the foot point on it for each point."""
    P = np.atleast_2d(np.asarray(pts, dtype=float))
    if tree is None:
        tree = cKDTree(poly.midpoints)
    k = min(k, len(poly))
    _, cand = tree.query(P, k=k)
    cand = cand.reshape(P.shape[0], k)
    a, b = poly.p0[cand], poly.p1[cand]
    ab = b - a
    t = np.clip(np.einsum("mkd,mkd->mk", P[:, None, :] - a, ab) / np.einsum("mkd,mkd->mk", ab, ab), 0.0, 1.0)
    foot = a + t[..., None] * ab
    dist = np.linalg.norm(foot - P[:, None, :], axis=-1)
    # ties (a shared end point) go to the segment with the nearer midpoint
    mid = np.linalg.norm(0.5 * (a + b) - P[:, None, :], axis=-1)
    dmin = dist.min(axis=1, keepdims=True)
    tied = dist <= dmin + 1e-14 * np.maximum(1.0, dmin)
    j = np.argmin(np.where(tied, mid, np.inf), axis=1)
    rows = np.arange(P.shape[0])
    return cand[rows, j], foot[rows, j]


class PostprocessedControl:
    """``P(u_shift - p_h / alpha)`` evaluated from the adjoint trace on the
    discrete interface.  Points on the true interface are mapped to the
    nearest point of the polyline first."""

    def __init__(self, space, poly, p_nodal, alpha, bounds=None, u_shift=None, levelset=None):
        self.space = space
        self.poly = poly
        self.p = np.asarray(p_nodal, dtype=float)
        self.alpha = float(alpha)
        self.bounds = bounds
        self.u_shift = u_shift
        self.levelset = levelset if levelset is not None else space.cls.levelset
        self._tree = cKDTree(poly.midpoints)

    def _combine(self, ptrace, star):
        shift = 0.0 if self.u_shift is None else self.u_shift(star)
        lo, hi = self.bounds if self.bounds is not None else (None, None)
        return project_box(shift - ptrace / self.alpha, lo, hi)

    def __call__(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        seg, foot = nearest_segment(self.poly, X, self._tree)
        ptrace = self.space.evaluate_trace(self.p, self.poly.owner[seg], foot)
        star = closest_point_on_interface(self.levelset, X)
        out = self._combine(ptrace, star)
        return out[0] if np.ndim(x) == 1 else out

    def on_segment_points(self, pts):
        """Values at points given per segment, shape (ns, k, 2)."""
        ns, k = pts.shape[:2]
        owner = np.repeat(self.poly.owner, k)
        P = pts.reshape(-1, 2)
        ptrace = self.space.evaluate_trace(self.p, owner, P)
        star = closest_point_on_interface(self.levelset, P) if self.u_shift is not None else P
        return np.asarray(self._combine(ptrace, star)).reshape(ns, k)


def postprocess_control(space, poly, p_nodal, alpha, bounds=None, u_shift=None, levelset=None):
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return PostprocessedControl(space, poly, p_nodal, alpha, bounds, u_shift, levelset)


def write_control_csv(path, control, poly):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_index", "midpoint_x", "midpoint_y", "value"])
        for s, (m, v) in enumerate(zip(poly.midpoints, control.values)):
            w.writerow([s, repr(float(m[0])), repr(float(m[1])), repr(float(v))])
