"""Manufactured optimal triples on the waterdrop interface, error norms and
convergence tables.

Both cases share the state ``y+ = 9/4 r^4 + 3 x2^2`` outside and
``y- = 2 x1 r^2`` inside, chosen so that ``y+ - y- = phi`` vanishes on the
interface, and the adjoint ``p(+/-) = beta(-/+) * phi * w`` with the bubble
``w = (x1^2 - 1)(x2^2 - 1)``.  The crossed coefficients make both the value
and the flux of ``p`` continuous across the interface.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import WaterdropLevelSet, closest_point_on_interface, segment_rule, triangle_rule

__all__ = [
    "SideFunction",
    "ManufacturedCase",
    "get_case",
    "ErrorRecord",
    "error_norms",
    "convergence_order",
    "StudyRow",
    "run_convergence_study",
    "write_study_csv",
    "format_study_table",
    "CSV_HEADER",
]

CSV_HEADER = [
    "case", "constrained", "N", "h",
    "e_y_l2", "ord", "e_p_l2", "ord", "e_u_l2", "ord",
    "e_y_linf", "ord", "e_p_linf", "ord", "e_u_linf", "ord",
    "iterations", "wall_seconds",
]


@dataclass
class SideFunction:
    """A function with separate branches outside (``plus``) and inside (``minus``).

    Called as ``f(points, side)`` with ``side`` broadcasting against the
    leading shape of ``points``; :meth:`exact` picks the branch from the
    level set instead.
    """

    plus: callable
    minus: callable
    levelset: object = None

    def __call__(self, pts, side):
        pts = np.asarray(pts, dtype=float)
        side = np.broadcast_to(side, pts.shape[:-1])
        return np.where(side > 0, self.plus(pts), self.minus(pts))

    def exact(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self(pts, np.where(self.levelset.value(pts) < 0, -1, 1))


def _xy(p):
    return p[..., 0], p[..., 1]


def _y_plus(p):
    x, y = _xy(p)
    r2 = x * x + y * y
    return 2.25 * r2 * r2 + 3.0 * y * y


def _y_minus(p):
    x, y = _xy(p)
    return 2.0 * x * (x * x + y * y)


def _grad_y_plus(p):
    x, y = _xy(p)
    r2 = x * x + y * y
    return np.stack([9.0 * x * r2, 9.0 * y * r2 + 6.0 * y], axis=-1)


def _grad_y_minus(p):
    x, y = _xy(p)
    return np.stack([6.0 * x * x + 2.0 * y * y, 4.0 * x * y], axis=-1)


def _lap_y_plus(p):
    x, y = _xy(p)
    return 36.0 * (x * x + y * y) + 6.0


def _lap_y_minus(p):
    return 16.0 * p[..., 0]


def _bubble(p):
    x, y = _xy(p)
    return (x * x - 1.0) * (y * y - 1.0)


def _lap_phi_w(p, ls):
    """Laplacian of ``phi * w``."""
    x, y = _xy(p)
    w = _bubble(p)
    gphi = ls.gradient(p)
    lap_phi = 36.0 * (x * x + y * y) - 16.0 * x + 6.0
    gw = np.stack([2.0 * x * (y * y - 1.0), 2.0 * y * (x * x - 1.0)], axis=-1)
    lap_w = 2.0 * (y * y - 1.0) + 2.0 * (x * x - 1.0)
    return w * lap_phi + 2.0 * np.sum(gphi * gw, axis=-1) + ls.value(p) * lap_w


@dataclass
class ManufacturedCase:
    case_id: int
    constrained: bool
    levelset: object
    beta_plus: float
    beta_minus: float
    alpha: float
    y_exact: SideFunction
    p_exact: SideFunction
    grad_y: SideFunction
    f: SideFunction
    y_d: SideFunction
    u_exact: callable
    u_shift: callable
    bounds: tuple | None
    domain: tuple = (-1.0, 1.0, -1.0, 1.0)
    g_dirichlet: callable = field(default=None, repr=False)
    g_N: callable = field(default=None, repr=False)
    # arguments of get_case, so worker processes can rebuild the closures;
    # dataclasses.replace drops it, since an edited case is no longer a stock one
    factory_args: tuple = field(default=None, init=False, repr=False, compare=False)

    def __reduce_ex__(self, protocol):
        if self.factory_args is None:
            return super().__reduce_ex__(protocol)
        return get_case, self.factory_args

    @property
    def name(self):
        return f"case{self.case_id}{'-constrained' if self.constrained else ''}"


def _unit_normal(ls, pts):
    g = ls.gradient(pts)
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    return np.where(nrm > 1e-14, g / np.where(nrm > 1e-14, nrm, 1.0), 0.0)


def get_case(case_id, constrained=None, alpha=1.0, beta_plus=10.0, beta_minus=1.0):
    """Manufactured data for case 1 (zero control) or case 2 (clipped sine).

    ``constrained`` defaults to False for case 1 and True for case 2.  For
    case 2 the control bounds are (0, 1) and the optimality condition is
    shifted by ``sin(2 pi x1)``; with ``constrained=False`` the bounds are
    dropped and the exact control becomes the shift itself.
    """
    if case_id not in (1, 2):
        raise ValueError(f"unknown case id {case_id!r}; expected 1 or 2")
    if alpha <= 0 or beta_plus <= 0 or beta_minus <= 0:
        raise ValueError("alpha and the diffusion coefficients must be positive")
    if constrained is None:
        constrained = case_id == 2
    ls = WaterdropLevelSet()
    bp, bm = float(beta_plus), float(beta_minus)

    y_exact = SideFunction(_y_plus, _y_minus, ls)
    grad_y = SideFunction(_grad_y_plus, _grad_y_minus, ls)
    p_exact = SideFunction(lambda p: bm * ls.value(p) * _bubble(p),
                           lambda p: bp * ls.value(p) * _bubble(p), ls)
    f = SideFunction(lambda p: -bp * _lap_y_plus(p), lambda p: -bm * _lap_y_minus(p), ls)
    # div(beta grad p) = beta+ beta- lap(phi w) on both sides
    y_d = SideFunction(lambda p: _y_plus(p) + bp * bm * _lap_phi_w(p, ls),
                       lambda p: _y_minus(p) + bp * bm * _lap_phi_w(p, ls), ls)

    if case_id == 1:
        def u_shift(p):
            return np.zeros(np.shape(p)[:-1])
        bounds = (0.0, 1.0) if constrained else None
    else:
        def u_shift(p):
            return np.sin(2.0 * np.pi * np.asarray(p)[..., 0])
        bounds = (0.0, 1.0) if constrained else None

    def u_exact(p):
        s = u_shift(p)
        return np.clip(s, *bounds) if bounds is not None else s

    def g_N(p):
        """Flux jump beta- dn y- - beta+ dn y+ minus the exact control."""
        n = _unit_normal(ls, p)
        jump = np.sum((bm * _grad_y_minus(p) - bp * _grad_y_plus(p)) * n, axis=-1)
        return jump - u_exact(p)

    case = ManufacturedCase(
        case_id=case_id, constrained=bool(constrained), levelset=ls,
        beta_plus=bp, beta_minus=bm, alpha=float(alpha),
        y_exact=y_exact, p_exact=p_exact, grad_y=grad_y, f=f, y_d=y_d,
        u_exact=u_exact, u_shift=u_shift, bounds=bounds,
        g_dirichlet=y_exact.exact, g_N=g_N,
    )
    case.factory_args = (case_id, bool(constrained), float(alpha), bp, bm)
    return case


# ---------------------------------------------------------------------------
# Error norms
# ---------------------------------------------------------------------------

@dataclass
class ErrorRecord:
    l2_omega_y: float
    linf_omega_y: float
    l2_omega_p: float
    linf_omega_p: float
    l2_gamma_u: float
    linf_gamma_u: float

    def as_dict(self):
        return dict(self.__dict__)


def _field_errors(space, values_at, exact, y_nodal, degree=4):
    """L2 and Linf errors of a cell-wise field against a level-set-branched
    exact function."""
    lam, w = triangle_rule(degree)
    pts = np.einsum("qv,cvd->cqd", lam, space.cell_tris)
    num = values_at(pts)
    ex = exact(pts)
    err = num - ex
    l2 = math.sqrt(float(np.sum(space.cell_area[:, None] * w[None, :] * err * err)))
    nodal = np.abs(y_nodal - exact(space.mesh.nodes))
    return l2, max(float(np.abs(err).max()), float(nodal.max()))


def _control_errors(case, poly, control_at, order=5):
    t, w = segment_rule(order)
    pts = poly.p0[:, None, :] + t[None, :, None] * (poly.p1 - poly.p0)[:, None, :]
    star = closest_point_on_interface(case.levelset, pts.reshape(-1, 2)).reshape(pts.shape)
    err = control_at(pts) - case.u_exact(star)
    weights = poly.lengths[:, None] * w[None, :]
    return math.sqrt(float(np.sum(weights * err * err))), float(np.abs(err).max())


def error_norms(solution, case, control="postprocessed"):
    """Six error measures of an optimality solution against ``case``.

    ``control`` picks the discrete control compared on the interface:
    ``"postprocessed"`` (projected adjoint trace) or ``"iterate"`` (the
    control the fixed-point loop returned).
    """
    prob = solution.problem
    space = prob.space

    def y_at(pts):
        return solution.state_at_cells(pts)

    def p_at(pts):
        return solution.adjoint_at_cells(pts)

    ly, my = _field_errors(space, y_at, case.y_exact.exact, solution.y)
    lp, mp = _field_errors(space, p_at, case.p_exact.exact, solution.p)
    if control == "postprocessed":
        ctrl = solution.postprocessed_control().on_segment_points
    elif control == "iterate":
        ctrl = solution.control_at_segment_points
    else:
        raise ValueError(f"unknown control kind {control!r}")
    lu, mu = _control_errors(case, prob.poly, ctrl)
    return ErrorRecord(ly, my, lp, mp, lu, mu)


def convergence_order(e1, h1, e2, h2):
    """``(log e1 - log e2) / (log h1 - log h2)``."""
    if min(e1, h1, e2, h2) <= 0:
        raise ValueError("errors and mesh sizes must be positive")
    if h1 == h2:
        raise ValueError("mesh sizes must differ")
    return (math.log(e1) - math.log(e2)) / (math.log(h1) - math.log(h2))


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------

@dataclass
class StudyRow:
    case_id: int
    constrained: bool
    n: int
    h: float
    errors: ErrorRecord
    orders: dict
    iterations: int
    converged: bool
    wall_seconds: float


_ORDER_KEYS = ("l2_omega_y", "l2_omega_p", "l2_gamma_u", "linf_omega_y", "linf_omega_p", "linf_gamma_u")


def _solve_row(case, n, mode, options, callback=None):
    """Solve one mesh; returns only picklable summaries."""
    from .optimize import build_problem, fixed_point_solve

    t0 = time.perf_counter()
    prob = build_problem(case, n, **options.get("problem", {}))
    sol = fixed_point_solve(prob, mode=mode, **options.get("loop", {}))
    errs = error_norms(sol, case)
    wall = time.perf_counter() - t0
    if callback is not None:
        callback(n, sol)
    return sol.iterations, sol.converged, errs, wall


def run_convergence_study(case, mode="pc", n_list=(32, 64, 128, 256), jobs=1, callback=None, **options):
    """Solve on every mesh in ``n_list`` and tabulate errors and orders.

    ``options`` may hold ``problem`` (keyword arguments for
    :func:`~ifecontrol.optimize.build_problem`) and ``loop`` (for
    :func:`~ifecontrol.optimize.fixed_point_solve`).  ``callback(n, solution)``
    is invoked per row, in order, when ``jobs == 1`` and ignored otherwise.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list must not be empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_solve_row, case, n, mode, options) for n in n_list]
            results = [fut.result() for fut in futures]
    else:
        results = [_solve_row(case, n, mode, options, callback) for n in n_list]

    rows = []
    d = case.domain
    for k, (n, (iterations, converged, errs, wall)) in enumerate(zip(n_list, results)):
        h = max(d[1] - d[0], d[3] - d[2]) / n
        orders = {}
        if k > 0:
            prev = rows[-1]
            for key in _ORDER_KEYS:
                e1, e2 = getattr(prev.errors, key), getattr(errs, key)
                orders[key] = convergence_order(e1, prev.h, e2, h) if e1 > 0 and e2 > 0 else float("nan")
        rows.append(StudyRow(case.case_id, case.constrained, n, h, errs, orders,
                             iterations, converged, wall))
    return rows


def _fmt_order(row, key):
    return f"{row.orders[key]:.4f}" if key in row.orders else ""


def study_records(rows):
    """CSV records (lists of strings) following :data:`CSV_HEADER`."""
    out = []
    for r in rows:
        e = r.errors
        rec = [str(r.case_id), str(int(r.constrained)), str(r.n), repr(r.h)]
        for key in _ORDER_KEYS:
            rec += [f"{getattr(e, key):.10e}", _fmt_order(r, key)]
        rec += [str(r.iterations), f"{r.wall_seconds:.3f}"]
        out.append(rec)
    return out


def write_study_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(study_records(rows))


def format_study_table(rows):
    """Aligned text table of errors and orders."""
    head = ["N", "|y-yh|_L2", "ord", "|p-ph|_L2", "ord", "|u-uh|_L2", "ord",
            "|y-yh|_Linf", "ord", "|p-ph|_Linf", "ord", "|u-uh|_Linf", "ord", "iter"]
    body = []
    for r in rows:
        line = [str(r.n)]
        for key in _ORDER_KEYS:
            line += [f"{getattr(r.errors, key):.4e}", _fmt_order(r, key)]
        line.append(str(r.iterations))
        body.append(line)
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
    return "\n".join([fmt(head)] + [fmt(b) for b in body])
