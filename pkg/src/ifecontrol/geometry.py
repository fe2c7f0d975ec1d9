"""Level-set interfaces, projections onto them, and quadrature rules.

Every geometric query is derived from an analytic level set ``phi`` with
``phi < 0`` inside (the minus sub-domain) and ``phi > 0`` outside.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "GeometryError",
    "LevelSet",
    "WaterdropLevelSet",
    "CircleLevelSet",
    "LineLevelSet",
    "InterfaceSegment",
    "eval_levelset",
    "edge_intersection",
    "edge_intersections",
    "closest_point_on_interface",
    "signed_distance",
    "segment_quadrature",
    "segment_rule",
    "triangle_rule",
    "triangle_quadrature",
]


class GeometryError(RuntimeError):
    """A geometric query could not be answered reliably."""


class LevelSet:
    """Base class: subclasses provide ``value``, ``gradient`` and ``hessian``.

    All methods accept points of shape ``(2,)`` or ``(..., 2)``.  Points of
    the zero set where the gradient vanishes are listed in
    ``singular_points``; projections test them explicitly.
    """

    singular_points = np.zeros((0, 2))

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def is_interior(self, x):
        return self.value(x) < 0.0


class WaterdropLevelSet(LevelSet):
    """phi = 9/4 (x^2+y^2)^2 - 2 x (x^2+y^2) + 3 y^2, with a cusp at the origin."""

    singular_points = np.zeros((1, 2))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        r2 = a * a + b * b
        return 2.25 * r2 * r2 - 2.0 * a * r2 + 3.0 * b * b

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        r2 = a * a + b * b
        gx = 9.0 * a * r2 - 6.0 * a * a - 2.0 * b * b
        gy = 9.0 * b * r2 - 4.0 * a * b + 6.0 * b
        return np.stack([gx, gy], axis=-1)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        r2 = a * a + b * b
        hxx = 9.0 * r2 + 18.0 * a * a - 12.0 * a
        hxy = 18.0 * a * b - 4.0 * b
        hyy = 9.0 * r2 + 18.0 * b * b - 4.0 * a + 6.0
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


class CircleLevelSet(LevelSet):
    """phi = |x - c|^2 - r^2 (smooth, not a distance function)."""

    def __init__(self, center=(0.0, 0.0), radius=1.0):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return np.sum(d * d, axis=-1) - self.radius ** 2

    def gradient(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.center)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(2.0 * np.eye(2), x.shape[:-1] + (2, 2)).copy()


class LineLevelSet(LevelSet):
    """phi = n . x + c, a straight interface."""

    def __init__(self, normal=(1.0, 0.0), offset=0.0):
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)

    def value(self, x):
        return np.asarray(x, dtype=float) @ self.normal + self.offset

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.normal, x.shape).copy()

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2, 2))


def eval_levelset(ls, x):
    """Return ``(phi(x), grad phi(x))``."""
    return ls.value(x), ls.gradient(x)


# ---------------------------------------------------------------------------
# Edge intersections
# ---------------------------------------------------------------------------

ROOT_RTOL = 1e-12
ROOT_MAXITER = 200


def edge_intersections(ls, P, Q, fP=None, fQ=None):
    """Vectorised bracketed root finding of ``phi`` on segments ``[P_k, Q_k]``.

    Every segment must carry a strict sign change.  Uses regula falsi with the
    Illinois modification and falls back to bisection whenever the bracket
    does not shrink by at least half.  Returns the root points, shape (m, 2).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    m = P.shape[0]
    if m == 0:
        return np.zeros((0, 2))
    fP = ls.value(P) if fP is None else np.asarray(fP, dtype=float)
    fQ = ls.value(Q) if fQ is None else np.asarray(fQ, dtype=float)
    if np.any(fP * fQ >= 0.0):
        raise GeometryError("edge_intersections needs a strict sign change on every segment")
    tol = ROOT_RTOL * np.maximum(np.abs(fP), np.abs(fQ))
    D = Q - P

    lo = np.zeros(m)
    hi = np.ones(m)
    flo = fP.copy()
    fhi = fQ.copy()
    t = np.full(m, 0.5)
    ft = ls.value(P + t[:, None] * D)
    side = np.zeros(m, dtype=int)
    active = np.abs(ft) > tol
    for _ in range(ROOT_MAXITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        # shrink the bracket with the latest evaluation
        same_lo = np.sign(ft[idx]) == np.sign(flo[idx])
        width_before = hi[idx] - lo[idx]
        lo_i, hi_i = lo[idx], hi[idx]
        flo_i, fhi_i = flo[idx], fhi[idx]
        lo_i = np.where(same_lo, t[idx], lo_i)
        flo_i = np.where(same_lo, ft[idx], flo_i)
        hi_i = np.where(same_lo, hi_i, t[idx])
        fhi_i = np.where(same_lo, fhi_i, ft[idx])
        # Illinois: halve the stale endpoint value when it is kept twice
        kept = np.where(same_lo, 1, -1)
        stale = side[idx] == kept
        fhi_i = np.where(stale & same_lo, 0.5 * fhi_i, fhi_i)
        flo_i = np.where(stale & ~same_lo, 0.5 * flo_i, flo_i)
        side[idx] = kept
        lo[idx], hi[idx], flo[idx], fhi[idx] = lo_i, hi_i, flo_i, fhi_i

        denom = fhi_i - flo_i
        t_new = lo_i - flo_i * (hi_i - lo_i) / np.where(denom != 0.0, denom, 1.0)
        bad = (denom == 0.0) | ~(t_new > lo_i) | ~(t_new < hi_i)
        bad |= (hi_i - lo_i) > 0.5 * width_before
        t_new = np.where(bad, 0.5 * (lo_i + hi_i), t_new)
        t[idx] = t_new
        ft[idx] = ls.value(P[idx] + t_new[:, None] * D[idx])
        width = hi_i - lo_i
        active[idx] = (np.abs(ft[idx]) > tol[idx]) & (width > 4.0 * np.finfo(float).eps)
    else:
        raise GeometryError(f"root refinement did not converge on {int(active.sum())} edge(s)")
    return P + t[:, None] * D


def edge_intersection(ls, p, q, vertex_tol=1e-12):
    """Interface crossing on the segment ``[p, q]``, or ``None``.

    An endpoint with ``|phi| <= vertex_tol`` is returned as the crossing.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    fp, fq = float(ls.value(p)), float(ls.value(q))
    if abs(fp) <= vertex_tol:
        return p.copy()
    if abs(fq) <= vertex_tol:
        return q.copy()
    if fp * fq > 0.0:
        return None
    return edge_intersections(ls, p[None], q[None], np.array([fp]), np.array([fq]))[0]


# ---------------------------------------------------------------------------
# Closest-point projection and signed distance
# ---------------------------------------------------------------------------

ON_INTERFACE_TOL = 1e-12
NEWTON_MAXITER = 60


def _gradient_projection(ls, Y, steps=8):
    """A few steps of y <- y - phi(y) grad/|grad|^2, landing near the zero set."""
    Y = Y.copy()
    for _ in range(steps):
        f = ls.value(Y)
        g = ls.gradient(Y)
        g2 = np.sum(g * g, axis=-1)
        ok = g2 > 1e-28
        step = np.where(ok, f / np.where(ok, g2, 1.0), 0.0)
        Y = Y - step[:, None] * g
    return Y


def _newton_foot_points(ls, X, Y):
    """Damped Newton on y - x - lam grad phi(y) = 0, phi(y) = 0."""
    g = ls.gradient(Y)
    g2 = np.sum(g * g, axis=-1)
    lam = np.where(g2 > 1e-28, np.sum((Y - X) * g, axis=-1) / np.where(g2 > 1e-28, g2, 1.0), 0.0)
    scale = 1.0 + np.abs(X).max(axis=-1)

    def residual(Yc, lamc, Xc):
        gc = ls.gradient(Yc)
        r = np.empty((Yc.shape[0], 3))
        r[:, :2] = Yc - Xc - lamc[:, None] * gc
        r[:, 2] = ls.value(Yc)
        return r

    R = residual(Y, lam, X)
    converged = np.zeros(X.shape[0], dtype=bool)
    for _ in range(NEWTON_MAXITER):
        rn = np.linalg.norm(R, axis=-1)
        converged = (np.abs(R[:, 2]) <= 1e-14 * scale) & (np.linalg.norm(R[:, :2], axis=-1) <= 1e-14 * scale)
        if converged.all():
            break
        idx = np.flatnonzero(~converged)
        gi = ls.gradient(Y[idx])
        Hi = ls.hessian(Y[idx])
        J = np.zeros((idx.size, 3, 3))
        J[:, :2, :2] = np.eye(2) - lam[idx, None, None] * Hi
        J[:, :2, 2] = -gi
        J[:, 2, :2] = gi
        det = np.linalg.det(J)
        solvable = np.abs(det) > 1e-300
        delta = np.zeros((idx.size, 3))
        if solvable.any():
            delta[solvable] = np.linalg.solve(J[solvable], -R[idx[solvable]][..., None])[..., 0]
        step = np.ones(idx.size)
        Ynew = Y[idx] + delta[:, :2]
        lnew = lam[idx] + delta[:, 2]
        Rnew = residual(Ynew, lnew, X[idx])
        for _ in range(30):
            worse = np.linalg.norm(Rnew, axis=-1) > (1.0 - 1e-4 * step) * rn[idx]
            worse &= step > 1e-6
            if not worse.any():
                break
            step = np.where(worse, 0.5 * step, step)
            Ynew = Y[idx] + step[:, None] * delta[:, :2]
            lnew = lam[idx] + step * delta[:, 2]
            Rnew[worse] = residual(Ynew[worse], lnew[worse], X[idx][worse])
        Y[idx], lam[idx], R[idx] = Ynew, lnew, Rnew
    return Y, converged


def _radial_search(ls, x, r_hi, n_angles=4096):
    """Smallest circle about x that reaches the opposite sign of phi."""
    s0 = np.sign(ls.value(x))
    ang = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    def reaches(r):
        vals = s0 * ls.value(x + r * ring)
        k = int(np.argmin(vals))
        return vals[k] <= 0.0, k

    hit, k_best = reaches(r_hi)
    r_lo = 0.0
    if not hit:
        # the guess radius may overshoot a small interface entirely, so scan
        # geometrically growing rings from far below it
        for r in r_hi * 2.0 ** (0.25 * np.arange(-160.0, 161.0)):
            hit, k_best = reaches(r)
            if hit:
                r_hi = r
                break
            r_lo = r
        else:
            raise GeometryError(f"no interface found near {x}")
    for _ in range(60):
        mid = 0.5 * (r_lo + r_hi)
        hit, k = reaches(mid)
        if hit:
            r_hi, k_best = mid, k
        else:
            r_lo = mid
        if r_hi - r_lo <= 1e-15 * (1.0 + r_hi):
            break
    # land exactly on the zero set along the best ray
    p_in = x + r_lo * ring[k_best]
    p_out = x + r_hi * ring[k_best]
    if s0 * ls.value(p_out) == 0.0:
        return p_out
    if np.sign(ls.value(p_in)) == np.sign(ls.value(p_out)):
        return p_out
    return edge_intersections(ls, p_in[None], p_out[None])[0]


def closest_point_on_interface(ls, x):
    """Orthogonal projection of ``x`` (shape (2,) or (m, 2)) onto the zero set.

    Newton's method on the Lagrange conditions from a gradient-projection
    starting guess; points where that fails (for example near a cusp, where
    the gradient vanishes) are handled by a radial bisection search.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    out = X.copy()
    fx = ls.value(X)
    todo = np.abs(fx) > ON_INTERFACE_TOL
    if todo.any():
        Xi = X[todo]
        Y0 = _gradient_projection(ls, Xi)
        Y, ok = _newton_foot_points(ls, Xi, Y0)
        # Newton may land on a farther branch; accept only if no closer
        # candidate came out of the projection guess.
        d_newton = np.linalg.norm(Y - Xi, axis=-1)
        d_guess = np.linalg.norm(Y0 - Xi, axis=-1)
        guess_on = np.abs(ls.value(Y0)) <= 1e-10
        ok &= ~(guess_on & (d_guess < d_newton * (1.0 - 1e-6)))
        ok &= np.isfinite(Y).all(axis=-1)
        for k in np.flatnonzero(~ok):
            r0 = d_guess[k] if guess_on[k] else max(abs(fx[todo][k]), 1e-3)
            Y[k] = _radial_search(ls, Xi[k], r0)
        S = np.asarray(ls.singular_points, dtype=float)
        if S.size:
            dist = np.linalg.norm(Y - Xi, axis=-1)
            dS = np.linalg.norm(Xi[:, None, :] - S[None, :, :], axis=-1)
            j = np.argmin(dS, axis=1)
            closer = dS[np.arange(Xi.shape[0]), j] < dist
            Y[closer] = S[j[closer]]
        out[todo] = Y
    return out[0] if single else out


def signed_distance(ls, x):
    """-dist inside, +dist outside, 0 on the interface."""
    X = np.asarray(x, dtype=float)
    cp = closest_point_on_interface(ls, X)
    d = np.linalg.norm(np.atleast_2d(X) - np.atleast_2d(cp), axis=-1)
    f = np.atleast_1d(ls.value(X))
    d = np.where(np.abs(f) <= ON_INTERFACE_TOL, 0.0, np.sign(f) * d)
    return d[0] if X.ndim == 1 else d


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfaceSegment:
    """One straight piece of the discrete interface, owned by one element."""

    p0: np.ndarray
    p1: np.ndarray
    element: int
    unit_normal: np.ndarray

    @property
    def midpoint(self):
        return 0.5 * (self.p0 + self.p1)

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))


@lru_cache(maxsize=None)
def segment_rule(order):
    """Gauss-Legendre nodes on [0, 1] and weights summing to one."""
    if order not in (1, 2, 3, 4, 5):
        raise ValueError(f"unsupported segment quadrature order {order}")
    xi, w = leggauss(order)
    return 0.5 * (xi + 1.0), 0.5 * w


def segment_quadrature(seg, order):
    """``(points, weights)`` of an ``order``-point Gauss rule on a segment.

    ``seg`` is an :class:`InterfaceSegment` or a pair of end points.
    """
    if isinstance(seg, InterfaceSegment):
        p0, p1 = seg.p0, seg.p1
    else:
        p0, p1 = (np.asarray(p, dtype=float) for p in seg)
    t, w = segment_rule(order)
    length = float(np.linalg.norm(p1 - p0))
    return p0 + t[:, None] * (p1 - p0), w * length


_DUNAVANT4 = (
    (0.44594849091596488632, 0.22338158967801146570),
    (0.091576213509770743460, 0.10995174365532186764),
)


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Barycentric points (k, 3) and weights summing to one."""
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        return pts, np.full(3, 1 / 3)
    if degree <= 4:
        pts, wts = [], []
        for a, w in _DUNAVANT4:
            b = 1.0 - 2.0 * a
            pts += [[b, a, a], [a, b, a], [a, a, b]]
            wts += [w, w, w]
        return np.array(pts), np.array(wts)
    raise ValueError(f"no triangle rule of degree {degree}")


def triangle_quadrature(tris, degree=4):
    """Points (n, k, 2) and weights (n, k) for triangles of shape (n, 3, 2)."""
    tris = np.asarray(tris, dtype=float)
    lam, w = triangle_rule(degree)
    pts = np.einsum("kv,nvd->nkd", lam, tris)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, area[:, None] * w[None, :]
