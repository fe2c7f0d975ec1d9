"""Symmetric positive definite solves for the state and adjoint systems."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg_core import SparseCSR

__all__ = [
    "SolverConfig",
    "SolverError",
    "IndefiniteMatrixError",
    "SolveInfo",
    "pcg",
    "SPDSolver",
    "solve_spd",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Iteration cap reached before the residual target."""


class IndefiniteMatrixError(SolverError):
    """Non-positive curvature met inside CG."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"
    rel_tolerance: float = 1e-12
    max_iterations: int | None = None
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if self.method not in ("cg", "direct"):
            raise ValueError(f"solver method must be 'cg' or 'direct', got {self.method!r}")
        if not (0.0 < self.rel_tolerance < 1.0):
            raise ValueError(f"rel_tolerance must lie in (0, 1), got {self.rel_tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.preconditioner not in ("jacobi", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    rhs_norm: float
    # True when CG stopped at its rounding floor, above tol * |b| but
    # within tol * (|A| |x| + |b|)
    stagnated: bool = False


def _as_csr(A):
    return A if isinstance(A, SparseCSR) else SparseCSR.from_scipy(A)


def pcg(A, b, tol=1e-12, max_iterations=None, preconditioner="jacobi", x0=None,
        check_every=50, patience=20):
    """Preconditioned conjugate gradients on a :class:`SparseCSR` matrix.

    Stops when ``||b - A x|| <= tol * ||b||`` (recomputed residual).
    Returns ``(x, SolveInfo)``.

    In floating point the true residual bottoms out near
    ``eps * ||A|| ||x||``, which can lie above ``tol * ||b||``.  The true
    residual is therefore recomputed every ``check_every`` iterations; when
    it stops halving (three target hits in a row, or ``patience`` periodic
    checks) the iteration ends.  The iterate is accepted, flagged
    ``stagnated``, if it meets the normwise backward-error bound
    ``tol * (||A|| ||x|| + ||b||)``, otherwise :class:`SolverError` is raised.
    """
    A = _as_csr(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    maxit = 10 * n if max_iterations is None else int(max_iterations)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0, 0.0)
    target = tol * bnorm
    if preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise IndefiniteMatrixError("non-positive diagonal entry")
        minv = 1.0 / d
    else:
        minv = np.ones(n)
    r = b - A.spmv(x)
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return x, SolveInfo(0, rnorm, bnorm)
    anorm = float(np.abs(A.to_scipy()).sum(axis=1).max())
    best_true, hit_stalls, check_stalls = rnorm, 0, 0

    def stagnated(it, true_r):
        if true_r <= tol * (anorm * float(np.linalg.norm(x)) + bnorm):
            log.warning("CG stagnated at relative residual %.2e (rounding floor); "
                        "accepted by the normwise backward-error bound", true_r / bnorm)
            return x, SolveInfo(it, true_r, bnorm, stagnated=True)
        raise SolverError(f"CG stagnated at relative residual {true_r / bnorm:.3e} after {it} iterations")

    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxit + 1):
        Ap = A.spmv(p)
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise IndefiniteMatrixError(f"negative curvature {curv:.3e} at CG iteration {it}")
        step = rz / curv
        x += step * p
        r -= step * Ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            # guard against drift of the recursively updated residual
            r = b - A.spmv(x)
            true_r = float(np.linalg.norm(r))
            if true_r <= target:
                return x, SolveInfo(it, true_r, bnorm)
            hit_stalls = hit_stalls + 1 if true_r > 0.5 * best_true else 0
            best_true = min(best_true, true_r)
            if hit_stalls >= 3:
                return stagnated(it, true_r)
        elif it % check_every == 0:
            true_r = float(np.linalg.norm(b - A.spmv(x)))
            if true_r <= 0.5 * best_true:
                best_true, check_stalls = true_r, 0
            else:
                check_stalls += 1
                if check_stalls >= patience:
                    return stagnated(it, true_r)
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxit} iterations; relative residual {rnorm / bnorm:.3e}")


class SPDSolver:
    """Reusable solver for one matrix: factor once (direct) or keep the
    preconditioner and warm start (CG)."""

    def __init__(self, A, config=None):
        self.config = config or SolverConfig()
        self.csr = _as_csr(A)
        self.last_info = None
        self._lu = None
        if self.config.method == "direct":
            M = sp.csc_matrix(self.csr.to_scipy())
            self._lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                options={"SymmetricMode": True})
            if np.any(self._lu.U.diagonal() <= 0):
                raise IndefiniteMatrixError("factorization found a non-positive pivot")

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float)
        if b.shape != (self.csr.shape[0],):
            raise ValueError(f"dimension mismatch: matrix {self.csr.shape}, rhs {b.shape}")
        if self._lu is not None:
            x = self._lu.solve(b)
            res = float(np.linalg.norm(self.csr.spmv(x) - b))
            self.last_info = SolveInfo(0, res, float(np.linalg.norm(b)))
            return x
        x, info = pcg(self.csr, b, self.config.rel_tolerance, self.config.max_iterations,
                      self.config.preconditioner, x0)
        log.debug("CG: %d iterations, residual %.3e", info.iterations, info.residual)
        self.last_info = info
        return x


def solve_spd(system, config=None, b=None):
    """Solve a :class:`SparseSystem` (or matrix with ``b``) and return ``x``."""
    config = config or SolverConfig()
    if b is None:
        A, b = system.matrix, system.rhs
    else:
        A = system
    return SPDSolver(A, config).solve(b)
