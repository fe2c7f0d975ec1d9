"""Independent reference computations used by several test modules."""
import numpy as np
from scipy.optimize import minimize_scalar

# phi = r^2 (9/4 r^2 - 2 r cos t + 3 sin^2 t), so away from the origin the
# curve is r(t) = (2 cos t +/- sqrt(4 cos^2 t - 27 sin^2 t)) / 4.5 for
# tan^2 t <= 4/27.
T_MAX = np.arctan(np.sqrt(4.0 / 27.0))


def waterdrop_point(t, branch):
    c, s = np.cos(t), np.sin(t)
    disc = np.maximum(4.0 * c * c - 27.0 * s * s, 0.0)
    r = (2.0 * c + branch * np.sqrt(disc)) / 4.5
    return np.stack([r * c, r * s], axis=-1)


def waterdrop_samples(m=200001):
    t = np.linspace(-T_MAX, T_MAX, m)
    return np.concatenate([waterdrop_point(t, 1.0), waterdrop_point(t, -1.0)])


def brute_force_closest(x, samples=None):
    """Closest point on the waterdrop by dense sampling plus a bounded
    one-dimensional refinement in the polar angle."""
    x = np.asarray(x, dtype=float)
    S = waterdrop_samples() if samples is None else samples
    k = int(np.argmin(np.sum((S - x) ** 2, axis=1)))
    m = S.shape[0] // 2
    branch = 1.0 if k < m else -1.0
    t = np.linspace(-T_MAX, T_MAX, m)[k % m]
    dt = 4.0 * T_MAX / m
    res = minimize_scalar(lambda s: np.sum((waterdrop_point(s, branch) - x) ** 2),
                          bounds=(max(-T_MAX, t - dt), min(T_MAX, t + dt)), method="bounded",
                          options={"xatol": 1e-14})
    best = waterdrop_point(res.x, branch)
    cand = [best, np.zeros(2)]
    return min(cand, key=lambda p: np.linalg.norm(p - x))


def waterdrop_length(m=400001):
    P = waterdrop_samples(m)
    half = P.shape[0] // 2
    upper = P[:half]
    lower = P[half:]
    return float(np.sum(np.linalg.norm(np.diff(upper, axis=0), axis=1))
                 + np.sum(np.linalg.norm(np.diff(lower, axis=0), axis=1)))


def p1_stiffness_reference(nodes, triangles):
    """Textbook linear FEM Laplacian, assembled element by element."""
    n = nodes.shape[0]
    K = np.zeros((n, n))
    for tri in triangles:
        X = nodes[tri]
        B = np.array([[X[1, 0] - X[0, 0], X[2, 0] - X[0, 0]], [X[1, 1] - X[0, 1], X[2, 1] - X[0, 1]]])
        area = 0.5 * abs(np.linalg.det(B))
        G = np.linalg.solve(B.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))
        K[np.ix_(tri, tri)] += area * G.T @ G
    return K
