"""Discrete optimal control with an interface (flux-jump) control.

The state equation is solved in the immersed space with the flux jump
``u + g_N`` entering as a line load on the discrete interface; the fixed
part ``g_N`` is additionally lifted by the enrichment so that the unknown
part lives in the homogeneous-jump space.  The adjoint has homogeneous
jumps and reuses the state operator.  The first-order condition
``u = P(u_shift - p/alpha)`` is solved by a projected fixed-point loop.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    apply_dirichlet,
    assemble_enrichment_correction,
    assemble_mass,
    assemble_stiffness,
    assemble_volume_load,
    interface_point_matrix,
    interface_trace_matrix,
)
from .control import ControlField, nearest_segment, postprocess_control, project_box
from .geometry import closest_point_on_interface, segment_rule, triangle_rule
from .ifem import build_enrichment, build_ife_space, project_interface_nodes
from .linsolve import SolverConfig, SPDSolver
from .mesh import build_mesh, classify_elements, extract_interface_polyline

__all__ = [
    "DiscreteProblem",
    "build_problem",
    "PointControl",
    "StateSolution",
    "solve_state",
    "solve_adjoint",
    "reduced_gradient",
    "gradient_pairing",
    "evaluate_cost",
    "reduced_cost",
    "reduced_cost_difference",
    "OptimalitySolution",
    "FixedPointError",
    "fixed_point_solve",
    "write_iteration_log",
]

log = logging.getLogger(__name__)


class FixedPointError(RuntimeError):
    """Iteration cap reached; ``solution`` holds the last iterate."""

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass
class PointControl:
    """Control known at the Gauss points of every segment (shape (ns, k))."""

    values: np.ndarray


@dataclass
class DiscreteProblem:
    case: object
    n: int
    mesh: object
    cls: object
    poly: object
    space: object
    stiffness: object
    mass: object
    trace: object
    point_matrix: object
    mid_matrix: object
    gauss_weights: np.ndarray
    gauss_points: np.ndarray
    solver: SPDSolver
    free: np.ndarray
    fixed: np.ndarray
    dirichlet: np.ndarray
    base_load: np.ndarray
    fixed_enrichment: object
    node_projection: object
    cell_weights: np.ndarray
    cell_basis: np.ndarray
    yd_cells: np.ndarray
    yd_load: np.ndarray
    shift_mid: np.ndarray
    shift_gauss: np.ndarray
    enrichment: bool
    control_enrichment: bool
    solver_config: SolverConfig = field(default_factory=SolverConfig)

    @property
    def alpha(self):
        return self.case.alpha

    @property
    def bounds(self):
        return self.case.bounds

    @property
    def num_segments(self):
        return len(self.poly)

    def zero_control(self, mode="pc"):
        if mode == "pc":
            return ControlField(np.zeros(self.num_segments))
        return PointControl(np.zeros(self.gauss_weights.shape))

    def control_load(self, u):
        if isinstance(u, PointControl):
            return self.point_matrix.T @ (self.gauss_weights * u.values).ravel()
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        return self.trace @ vals

    def control_at_gauss(self, u):
        if isinstance(u, PointControl):
            return u.values
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        return np.broadcast_to(vals[:, None], self.gauss_weights.shape)

    def control_at_feet(self, u):
        """Control values at the closest points of interface-element nodes."""
        feet = self.node_projection.foot
        seg, foot = nearest_segment(self.poly, feet)
        if isinstance(u, PointControl):
            # nearest Gauss point of the nearest segment
            t, _ = segment_rule(self.gauss_weights.shape[1])
            s = np.linalg.norm(foot - self.poly.p0[seg], axis=-1) / self.poly.lengths[seg]
            k = np.argmin(np.abs(s[:, None] - t[None, :]), axis=1)
            return u.values[seg, k]
        vals = np.asarray(getattr(u, "values", u), dtype=float)
        return vals[seg]


def build_problem(case, n, variant="conforming", enrichment=True, control_enrichment=False,
                  solver=None, line_order=3):
    """Mesh, classify, build the space and assemble every operator for ``case``.

    ``control_enrichment`` also enriches the state for the control part of
    the flux jump.  The adjoint ignores that term, so with it on the
    reduced gradient is only approximate.
    """
    solver = solver or SolverConfig()
    ls = case.levelset
    mesh = build_mesh(case.domain, n)
    cls = classify_elements(mesh, ls)
    poly = extract_interface_polyline(cls)
    space = build_ife_space(mesh, cls, case.beta_plus, case.beta_minus, variant)

    K = assemble_stiffness(space)
    M = assemble_mass(space)
    B = interface_trace_matrix(space, poly, line_order)
    Qg = interface_point_matrix(space, poly, line_order)
    Qm = interface_point_matrix(space, poly, 1)
    t, w = segment_rule(line_order)
    gpts = poly.p0[:, None, :] + t[None, :, None] * (poly.p1 - poly.p0)[:, None, :]
    gw = poly.lengths[:, None] * w[None, :]
    gstar = closest_point_on_interface(ls, gpts.reshape(-1, 2)).reshape(gpts.shape)
    mstar = closest_point_on_interface(ls, poly.midpoints)

    # fixed data: volume source, fixed flux jump on the interface, its enrichment
    load = assemble_volume_load(space, case.f)
    gN = case.g_N(gstar)
    load += Qg.T @ (gw * gN).ravel()
    proj = project_interface_nodes(space, ls)
    fixed_enr = None
    if enrichment:
        fixed_enr = build_enrichment(space, case.g_N, proj=proj)
        load += assemble_enrichment_correction(space, fixed_enr)

    fixed = mesh.boundary_nodes
    gD = case.g_dirichlet(mesh.nodes[fixed])
    system = apply_dirichlet(K, np.zeros(mesh.num_nodes), fixed, gD)

    lam, qw = triangle_rule(4)
    cpts = np.einsum("qv,cvd->cqd", lam, space.cell_tris)
    cw = space.cell_area[:, None] * qw[None, :]
    d = cpts - space.cell_ref[:, None, :]
    cbasis = space.cell_val[:, None, :] + np.einsum("ckd,cqd->cqk", space.cell_grad, d)
    yd_cells = case.y_d(cpts, space.cell_side[:, None])
    yd_load = _cell_load(space, cw * yd_cells, cbasis)

    return DiscreteProblem(
        case=case, n=int(n), mesh=mesh, cls=cls, poly=poly, space=space,
        stiffness=K, mass=M, trace=B, point_matrix=Qg, mid_matrix=Qm,
        gauss_weights=gw, gauss_points=gpts,
        solver=SPDSolver(system.matrix, solver), free=system.free, fixed=fixed, dirichlet=gD,
        base_load=load, fixed_enrichment=fixed_enr, node_projection=proj,
        cell_weights=cw, cell_basis=cbasis, yd_cells=yd_cells, yd_load=yd_load,
        shift_mid=np.asarray(case.u_shift(mstar), dtype=float),
        shift_gauss=np.asarray(case.u_shift(gstar), dtype=float),
        enrichment=bool(enrichment), control_enrichment=bool(control_enrichment and enrichment),
        solver_config=solver,
    )


def _cell_load(space, weighted, cbasis):
    """``sum_q weighted[c, q] * phi_k(x_cq)`` scattered to global nodes."""
    contrib = np.einsum("cq,cqk->ck", weighted, cbasis)
    nodes = space.cell_nodes
    keep = nodes >= 0
    return np.bincount(nodes[keep], weights=contrib[keep], minlength=space.num_nodes)


@dataclass
class StateSolution:
    """Nodal part ``q`` plus the enrichment; ``y_h = q_h + y_sigma``."""

    q: np.ndarray
    enrichment: object
    cell_values: np.ndarray


def _field_on_cells(prob, nodal):
    U = np.where(prob.space.cell_nodes >= 0, nodal[prob.space.cell_nodes], 0.0)
    return np.einsum("cqk,ck->cq", prob.cell_basis, U)


def _enrichment_on_cells(prob, enr):
    if enr is None:
        return 0.0
    lam, _ = triangle_rule(4)
    pts = np.einsum("qv,cvd->cqd", lam, prob.space.cell_tris)
    d = pts - prob.space.cell_ref[:, None, :]
    return enr.cell_val[:, None] + np.einsum("cd,cqd->cq", enr.cell_grad, d)


def solve_state(prob, u, x0=None):
    """State for control ``u`` (a :class:`ControlField`, array of segment
    values or :class:`PointControl`)."""
    rhs = prob.base_load + prob.control_load(u)
    enr = prob.fixed_enrichment
    if prob.control_enrichment:
        uval = prob.control_at_feet(u)
        extra = build_enrichment(prob.space, uval, proj=prob.node_projection)
        rhs = rhs + assemble_enrichment_correction(prob.space, extra)
        enr = _sum_enrichments(enr, extra)
    K = prob.stiffness
    b = rhs[prob.free] - K[prob.free][:, prob.fixed] @ prob.dirichlet
    q = np.zeros(prob.mesh.num_nodes)
    q[prob.fixed] = prob.dirichlet
    q[prob.free] = prob.solver.solve(b, None if x0 is None else x0[prob.free])
    cells = _field_on_cells(prob, q) + _enrichment_on_cells(prob, enr)
    return StateSolution(q, enr, cells)


def _sum_enrichments(a, b):
    if a is None:
        return b
    from .ifem import EnrichmentField

    return EnrichmentField(a.space, a.node_tilde + b.node_tilde, a.cell_val + b.cell_val,
                           a.cell_grad + b.cell_grad)


def adjoint_rhs(prob, state, target=None):
    """``(y_h - y_d, phi_i)`` with the cost's quadrature."""
    yd = prob.yd_cells if target is None else target
    return _cell_load(prob.space, prob.cell_weights * (state.cell_values - yd), prob.cell_basis)


def solve_adjoint(prob, state, x0=None, rhs=None):
    """Adjoint with homogeneous boundary data and homogeneous jumps."""
    r = adjoint_rhs(prob, state) if rhs is None else rhs
    p = np.zeros(prob.mesh.num_nodes)
    p[prob.free] = prob.solver.solve(r[prob.free], None if x0 is None else x0[prob.free])
    return p


def reduced_gradient(prob, u, p):
    """``alpha (u - u_shift) + p_h`` at the Gauss points of every segment."""
    trace = (prob.point_matrix @ p).reshape(prob.gauss_weights.shape)
    return prob.alpha * (prob.control_at_gauss(u) - prob.shift_gauss) + trace


def gradient_pairing(prob, g, v):
    """``<g, v>`` on the discrete interface for a direction ``v``."""
    return float(np.sum(prob.gauss_weights * g * prob.control_at_gauss(v)))


def evaluate_cost(prob, state, u):
    track = 0.5 * float(np.sum(prob.cell_weights * (state.cell_values - prob.yd_cells) ** 2))
    du = prob.control_at_gauss(u) - prob.shift_gauss
    reg = 0.5 * prob.alpha * float(np.sum(prob.gauss_weights * du * du))
    return track + reg


def reduced_cost(prob, u):
    return evaluate_cost(prob, solve_state(prob, u), u)


def reduced_cost_difference(prob, u1, u2):
    """``J(u1) - J(u2)`` from two state solves, written as products of
    differences so that no large cost values cancel."""
    s1, s2 = solve_state(prob, u1), solve_state(prob, u2)
    dy = s1.cell_values - s2.cell_values
    sy = s1.cell_values + s2.cell_values - 2.0 * prob.yd_cells
    g1, g2 = prob.control_at_gauss(u1), prob.control_at_gauss(u2)
    du = g1 - g2
    su = g1 + g2 - 2.0 * prob.shift_gauss
    return 0.5 * float(np.sum(prob.cell_weights * dy * sy)) + \
        0.5 * prob.alpha * float(np.sum(prob.gauss_weights * du * su))


@dataclass
class OptimalitySolution:
    problem: DiscreteProblem
    mode: str
    state: StateSolution
    p: np.ndarray
    control: object
    iterations: int
    history: list
    costs: list
    converged: bool

    @property
    def y(self):
        """Nodal state values (the enrichment vanishes at nodes)."""
        return self.state.q

    def state_at_cells(self, pts):
        """State at per-cell points (c, q, 2)."""
        space = self.problem.space
        cells = np.repeat(np.arange(space.num_cells), pts.shape[1])
        P = pts.reshape(-1, 2)
        vals = space.evaluate_cells(self.state.q, cells, P)
        if self.state.enrichment is not None:
            vals = vals + self.state.enrichment.evaluate_cells(cells, P)
        return vals.reshape(pts.shape[:2])

    def adjoint_at_cells(self, pts):
        space = self.problem.space
        cells = np.repeat(np.arange(space.num_cells), pts.shape[1])
        return space.evaluate_cells(self.p, cells, pts.reshape(-1, 2)).reshape(pts.shape[:2])

    def postprocessed_control(self):
        prob = self.problem
        return postprocess_control(prob.space, prob.poly, self.p, prob.alpha, prob.bounds,
                                   prob.case.u_shift, prob.case.levelset)

    def control_at_segment_points(self, pts):
        if isinstance(self.control, PointControl):
            return self.postprocessed_control().on_segment_points(pts)
        return np.broadcast_to(self.control.values[:, None], pts.shape[:2])

    def projection_residual(self):
        """Per-segment (or per-point) residual of the projection equation."""
        return np.abs(_control_update(self.problem, self.p, self.mode, self.control))


def _control_update(prob, p, mode, u_old=None):
    """``P(u_shift - p/alpha)`` minus ``u_old`` when given, else the update."""
    lo, hi = prob.bounds if prob.bounds is not None else (None, None)
    if mode == "pc":
        new = project_box(prob.shift_mid - (prob.mid_matrix @ p) / prob.alpha, lo, hi)
        new = np.atleast_1d(new)
        return new - u_old.values if u_old is not None else ControlField(new, prob.bounds)
    trace = (prob.point_matrix @ p).reshape(prob.gauss_weights.shape)
    new = np.asarray(project_box(prob.shift_gauss - trace / prob.alpha, lo, hi))
    return new - u_old.values if u_old is not None else PointControl(new)


def fixed_point_solve(prob, mode="pc", tol=1e-15, rel_tol=1e-14, max_iterations=500, u0=None,
                      strict=True):
    """Projected fixed-point iteration on the first-order conditions.

    Each sweep solves the state for the current control, the adjoint for
    that state, and replaces the control by ``P(u_shift - p/alpha)``
    sampled at segment midpoints (``mode="pc"``) or at the interface Gauss
    points (``mode="variational"``).  The loop stops when the largest
    change is at most ``tol`` or at most ``rel_tol`` times the largest
    control value.
    """
    if mode not in ("pc", "variational"):
        raise ValueError(f"mode must be 'pc' or 'variational', got {mode!r}")
    u = prob.zero_control(mode) if u0 is None else u0
    history, costs = [], []
    state = p = None
    converged = False
    k = 0
    for k in range(1, max_iterations + 1):
        state = solve_state(prob, u, None if state is None else state.q)
        costs.append(evaluate_cost(prob, state, u))
        p = solve_adjoint(prob, state, p)
        u_new = _control_update(prob, p, mode)
        change = float(np.max(np.abs(u_new.values - u.values))) if u_new.values.size else 0.0
        history.append(change)
        log.debug("fixed point %d: change %.3e cost %.12e", k, change, costs[-1])
        u = u_new
        scale = float(np.max(np.abs(u.values))) if u.values.size else 0.0
        if change <= tol or change <= rel_tol * scale:
            converged = True
            break
    # final state and adjoint for the returned control
    state = solve_state(prob, u, state.q)
    p = solve_adjoint(prob, state, p)
    sol = OptimalitySolution(prob, mode, state, p, u, k, history, costs, converged)
    if not converged:
        msg = (f"fixed-point loop stopped after {max_iterations} iterations; last change "
               f"{history[-1]:.3e} (alpha={prob.alpha} may be too small for contraction)")
        if strict:
            raise FixedPointError(msg, sol)
        log.warning(msg)
    return sol


def write_iteration_log(path, solution):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "change_norm", "cost"])
        for k, (c, j) in enumerate(zip(solution.history, solution.costs), start=1):
            w.writerow([k, repr(c), repr(j)])


def l2_interface_norm(prob, values):
    """L2 norm on the discrete interface of values at the Gauss points."""
    return math.sqrt(float(np.sum(prob.gauss_weights * np.asarray(values) ** 2)))
