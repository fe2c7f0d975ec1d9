import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from ifecontrol.linalg_core import SparseCSR
from ifecontrol.linsolve import (
    IndefiniteMatrixError, SolverConfig, SolverError, SPDSolver, pcg, solve_spd,
)

METHODS = [SolverConfig(method="direct"), SolverConfig(method="cg"),
           SolverConfig(method="cg", preconditioner="none")]


@pytest.mark.parametrize("cfg", METHODS)
def test_identity(cfg):
    b = np.array([3.0, -1.0, 2.0, 0.5])
    np.testing.assert_allclose(SPDSolver(SparseCSR.identity(4), cfg).solve(b), b, rtol=1e-14)


@pytest.mark.parametrize("cfg", METHODS)
def test_two_by_two(cfg):
    A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(SPDSolver(A, cfg).solve(np.array([3.0, 3.0])), [1.0, 1.0], rtol=1e-13)


@pytest.fixture(scope="module")
def state_system():
    from ifecontrol.assembly import apply_dirichlet, assemble_stiffness, assemble_volume_load
    from ifecontrol.ifem import build_ife_space
    from ifecontrol.mesh import build_mesh, classify_elements
    from ifecontrol.verify import get_case

    case = get_case(1)
    m = build_mesh(n=32)
    cls = classify_elements(m, case.levelset)
    space = build_ife_space(m, cls, 10.0, 1.0, "conforming")
    load = assemble_volume_load(space, case.f)
    fixed = m.boundary_nodes
    return apply_dirichlet(assemble_stiffness(space), load, fixed, case.g_dirichlet(m.nodes[fixed]))


@pytest.mark.parametrize("cfg", METHODS[:2])
def test_state_system_residual(state_system, cfg):
    x = solve_spd(state_system, cfg)
    assert state_system.residual_norm(x) <= 1e-12 * np.linalg.norm(state_system.rhs)


def test_preconditioner_independence(state_system):
    xs = [solve_spd(state_system, c) for c in METHODS]
    for x in xs[1:]:
        assert np.linalg.norm(x - xs[0]) <= 1e-9 * np.linalg.norm(xs[0])


def test_cg_records_iterations(state_system):
    s = SPDSolver(state_system.matrix, SolverConfig(method="cg"))
    s.solve(state_system.rhs)
    assert 0 < s.last_info.iterations < state_system.matrix.shape[0]


def test_indefinite_detected():
    A = sp.csr_matrix(np.diag([1.0, -2.0, 3.0]))
    with pytest.raises(IndefiniteMatrixError):
        pcg(A, np.ones(3), preconditioner="none")
    with pytest.raises(IndefiniteMatrixError):
        SPDSolver(A, SolverConfig(method="direct"))
    with pytest.raises(IndefiniteMatrixError):
        SPDSolver(A, SolverConfig(method="cg")).solve(np.ones(3))


def test_iteration_cap_reported():
    n = 200
    A = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    with pytest.raises(SolverError, match="did not converge"):
        pcg(A, np.ones(n), max_iterations=3)


def test_zero_rhs():
    x, info = pcg(SparseCSR.identity(5), np.zeros(5))
    assert not np.any(x) and info.iterations == 0


@pytest.mark.parametrize("kwargs", [dict(method="gmres"), dict(rel_tolerance=0.0),
                                    dict(rel_tolerance=1.0), dict(max_iterations=0),
                                    dict(preconditioner="ilu")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        SPDSolver(SparseCSR.identity(3)).solve(np.ones(4))


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_random_spd_systems(n, seed):
    g = np.random.default_rng(seed)
    B = g.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    b = g.standard_normal(n)
    for cfg in METHODS:
        x = SPDSolver(sp.csr_matrix(A), cfg).solve(b)
        assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)


def _laplacian_1d(n):
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def test_cg_stops_at_rounding_floor():
    # a smooth eigenvector: |b| << |A| |x|, so 1e-12 * |b| is below what CG can reach
    n = 2000
    A = _laplacian_1d(n)
    x = 1e3 * np.sin(np.pi * np.arange(1, n + 1) / (n + 1))
    b = A @ x
    xs, info = pcg(A, b, tol=1e-12)
    assert info.stagnated and info.iterations < 2 * n
    assert np.linalg.norm(b - A @ xs) <= 1e-12 * (abs(A).sum(axis=1).max() * np.linalg.norm(xs) + np.linalg.norm(b))
    assert np.linalg.norm(xs - x) <= 1e-10 * np.linalg.norm(x)


def test_cg_unreachable_tolerance_fails_fast():
    n = 2000
    A = _laplacian_1d(n)
    b = A @ (1e3 * np.sin(np.pi * np.arange(1, n + 1) / (n + 1)))
    with pytest.raises(SolverError, match="stagnated"):
        pcg(A, b, tol=1e-17, max_iterations=10 ** 6)


def test_cg_reaching_target_is_not_flagged(rng):
    A = _laplacian_1d(50) + sp.identity(50)
    _, info = pcg(A, rng.standard_normal(50))
    assert not info.stagnated
