import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ifecontrol.control import project_box
from ifecontrol.optimize import build_problem, fixed_point_solve
from ifecontrol.verify import (
    CSV_HEADER, SideFunction, convergence_order, error_norms, format_study_table, get_case,
    run_convergence_study, study_records, write_study_csv,
)

from oracles import T_MAX, waterdrop_point


def gamma_points(m=400):
    # stay clear of the cusp, where the normal is undefined
    t = np.linspace(-0.97 * T_MAX, 0.97 * T_MAX, m)
    pts = np.concatenate([waterdrop_point(t, 1.0), waterdrop_point(t, -1.0)])
    return pts[np.linalg.norm(pts, axis=1) > 0.05]


def normals(case, pts):
    g = case.levelset.gradient(pts)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def fd_gradient(fn, pts, h=1e-5):
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    return np.stack([(fn(pts + ex) - fn(pts - ex)) / (2 * h), (fn(pts + ey) - fn(pts - ey)) / (2 * h)], axis=-1)


def fd_laplacian(fn, pts, h=2e-3):
    # fourth-order five-point stencil in each direction
    total = 0.0
    for e in (np.array([h, 0.0]), np.array([0.0, h])):
        total = total + (-fn(pts + 2 * e) + 16 * fn(pts + e) - 30 * fn(pts) + 16 * fn(pts - e) - fn(pts - 2 * e)) / (12 * h * h)
    return total


def test_case1_adjoint_vanishes_on_boundary(case1):
    s = np.linspace(-1, 1, 41)
    for x1 in (-1.0, 1.0):
        pts = np.stack([np.full_like(s, x1), s], axis=1)
        assert np.all(case1.p_exact.exact(pts) == 0.0)


def test_case1_state_value(case1):
    assert case1.levelset.value(np.array([1.0, 0.0])) == pytest.approx(0.25)
    assert case1.y_exact.exact(np.array([[1.0, 0.0]]))[0] == pytest.approx(9 / 4, abs=1e-15)


def test_forcing_inside_matches_fd_laplacian(case1):
    x = np.array([[0.1, 0.0]])
    assert case1.levelset.value(x)[0] < 0
    fd = -case1.beta_minus * fd_laplacian(case1.y_exact.minus, x)
    assert abs(case1.f(x, -1)[0] - fd[0]) <= 1e-6


@pytest.mark.parametrize("side", [1, -1])
def test_forcing_and_target_match_fd(case1, rng, side):
    pts = rng.uniform(-0.9, 0.9, (50, 2))
    beta = case1.beta_plus if side > 0 else case1.beta_minus
    y = case1.y_exact.plus if side > 0 else case1.y_exact.minus
    p = case1.p_exact.plus if side > 0 else case1.p_exact.minus
    np.testing.assert_allclose(case1.f(pts, side), -beta * fd_laplacian(y, pts), rtol=0, atol=1e-6)
    expect = y(pts) + beta * fd_laplacian(p, pts)
    np.testing.assert_allclose(case1.y_d(pts, side), expect, rtol=0, atol=1e-6)


def test_state_continuous_on_interface(case1):
    pts = gamma_points()
    assert np.abs(case1.y_exact.plus(pts) - case1.y_exact.minus(pts)).max() <= 1e-10


def test_adjoint_jumps_vanish(case1):
    pts = gamma_points()
    pp, pm = case1.p_exact.plus, case1.p_exact.minus
    assert np.abs(pp(pts) - pm(pts)).max() <= 1e-8
    n = normals(case1, pts)
    flux = case1.beta_plus * np.sum(fd_gradient(pp, pts) * n, 1) - case1.beta_minus * np.sum(fd_gradient(pm, pts) * n, 1)
    assert np.abs(flux).max() <= 1e-8


@pytest.mark.parametrize("cid", [1, 2])
def test_flux_jump_source_matches_fd(cid):
    case = get_case(cid)
    pts = gamma_points()
    n = normals(case, pts)
    jump = (case.beta_minus * np.sum(fd_gradient(case.y_exact.minus, pts) * n, 1)
            - case.beta_plus * np.sum(fd_gradient(case.y_exact.plus, pts) * n, 1))
    assert np.abs(case.g_N(pts) + case.u_exact(pts) - jump).max() <= 1e-6


def test_case2_shift_projection(case2):
    t = np.random.default_rng(3).uniform(-T_MAX, T_MAX, 1000)
    pts = np.concatenate([waterdrop_point(t[:500], 1.0), waterdrop_point(t[500:], -1.0)])
    lo, hi = case2.bounds
    assert lo == 0.0 and hi == 1.0
    assert np.abs(project_box(case2.u_shift(pts), lo, hi) - case2.u_exact(pts)).max() <= 1e-12


def test_get_case_errors():
    with pytest.raises(ValueError):
        get_case(3)
    with pytest.raises(ValueError):
        get_case(1, alpha=0.0)
    with pytest.raises(ValueError):
        get_case(2, beta_minus=-1.0)


def test_case_defaults(case1, case2):
    assert (case1.alpha, case1.beta_plus, case1.beta_minus) == (1.0, 10.0, 1.0)
    assert not case1.constrained and case1.bounds is None
    assert case2.constrained


def test_convergence_order_published_value():
    assert convergence_order(1.9091e-2, 2 / 32, 4.6808e-3, 2 / 64) == pytest.approx(2.0280, abs=1e-4)


@given(st.floats(1e-8, 1.0), st.floats(1e-3, 1.0))
def test_convergence_order_halving(e, h):
    assert convergence_order(e, h, e / 2, h / 2) == pytest.approx(1.0)
    assert convergence_order(e, h, e / 4, h / 2) == pytest.approx(2.0)


@pytest.mark.parametrize("args", [(0, 1, 1, 0.5), (1, -1, 1, 0.5), (1, 0.5, 1, 0.5)])
def test_convergence_order_errors(args):
    with pytest.raises(ValueError):
        convergence_order(*args)


def test_patch_error_norms_vanish():
    def lin(P):
        return 0.3 + 1.2 * P[..., 0] - 0.7 * P[..., 1]

    def zero(P, side=None):
        return np.zeros(np.shape(P)[:-1])

    base = get_case(1, beta_plus=1.0, beta_minus=1.0)
    ls = base.levelset
    lin_side = SideFunction(lin, lin, ls)
    zero_side = SideFunction(zero, zero, ls)
    case = dataclasses.replace(base, y_exact=lin_side, p_exact=zero_side, f=zero_side, y_d=lin_side,
                               u_exact=zero, u_shift=zero, g_dirichlet=lin, g_N=zero)
    sol = fixed_point_solve(build_problem(case, 16))
    e = error_norms(sol, case)
    assert max(e.as_dict().values()) <= 1e-10
    assert np.abs(sol.y - lin(sol.problem.mesh.nodes)).max() <= 1e-10


def test_error_norms_bad_kind(solution32, case1):
    with pytest.raises(ValueError):
        error_norms(solution32, case1, control="exact")


def test_case1_state_error_at_128(case1):
    e = error_norms(fixed_point_solve(build_problem(case1, 128)), case1)
    assert 9.0432e-4 / 3 <= e.l2_omega_y <= 9.0432e-4 * 3


def test_case2_control_max_error_at_256(case2):
    e = error_norms(fixed_point_solve(build_problem(case2, 256)), case2)
    assert 2.4530e-4 / 3 <= e.linf_gamma_u <= 2.4530e-4 * 3


def test_single_row_study(case1):
    rows = run_convergence_study(case1, n_list=[16])
    rec = study_records(rows)[0]
    assert len(rec) == len(CSV_HEADER)
    assert all(rec[i] == "" for i, name in enumerate(CSV_HEADER) if name == "ord")


def test_study_rejects_bad_lists(case1):
    with pytest.raises(ValueError):
        run_convergence_study(case1, n_list=[])
    with pytest.raises(ValueError):
        run_convergence_study(case1, n_list=[32, 16])


def test_study_csv_deterministic(tmp_path, case2):
    paths = []
    for k in range(2):
        rows = run_convergence_study(case2, n_list=[16, 32])
        paths.append(tmp_path / f"t{k}.csv")
        write_study_csv(paths[-1], rows)
    a, b = (list(csv.reader(open(p))) for p in paths)
    assert a[0] == CSV_HEADER and len(a) == 3
    strip = lambda rows: [r[:-1] for r in rows]  # noqa: E731  wall time differs
    assert strip(a) == strip(b)
    assert a[2][CSV_HEADER.index("ord")] != "" and a[1][5] == ""
    table = format_study_table(rows)
    assert len(table.splitlines()) == 3


def test_parallel_rows_match_serial(case1):
    serial = run_convergence_study(case1, n_list=[16, 24])
    parallel = run_convergence_study(case1, n_list=[16, 24], jobs=2)
    assert [r[:-1] for r in study_records(serial)] == [r[:-1] for r in study_records(parallel)]


def test_stock_case_pickles():
    import pickle

    c = get_case(2, alpha=2.0, beta_plus=5.0)
    d = pickle.loads(pickle.dumps(c))
    pts = np.array([[0.3, 0.1], [0.6, -0.1]])
    assert d.alpha == 2.0 and d.beta_plus == 5.0 and d.constrained
    np.testing.assert_array_equal(d.g_N(pts), c.g_N(pts))


def test_halving_factor_corridor(case1):
    rows = run_convergence_study(case1, n_list=[64, 128, 256])
    e = [r.errors.l2_omega_y for r in rows]
    for a, b in zip(e, e[1:]):
        assert 3.0 <= a / b <= 5.5
