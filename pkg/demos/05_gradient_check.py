"""Checking the adjoint gradient against finite differences.

The reduced cost J(u) = 1/2 |y(u) - y_d|^2 + alpha/2 |u|^2 is quadratic in
the control, so a centered difference has no truncation error at all: what
remains is floating-point noise, which grows as the step shrinks.  The
pairing <alpha u + p, v> on the discrete interface is the exact
directional derivative.

Run:  python demos/05_gradient_check.py
"""
import numpy as np

from ifecontrol.control import ControlField
from ifecontrol.optimize import (
    build_problem, gradient_pairing, l2_interface_norm, reduced_cost_difference, reduced_gradient,
    solve_adjoint, solve_state,
)
from ifecontrol.verify import get_case

prob = build_problem(get_case(1), 32)
rng = np.random.default_rng(0)
u = ControlField(0.1 * rng.standard_normal(prob.num_segments))
p = solve_adjoint(prob, solve_state(prob, u))
g = reduced_gradient(prob, u, p)
print(f"|g| on Gamma_h = {l2_interface_norm(prob, g):.6e}")

v = ControlField(rng.standard_normal(prob.num_segments))
exact = gradient_pairing(prob, g, v)
print(f"<g, v> = {exact:.12e}\n")
print("eps      centered difference     |error|")
for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
    fd = reduced_cost_difference(prob, ControlField(u.values + eps * v.values),
                                 ControlField(u.values - eps * v.values)) / (2 * eps)
    print(f"{eps:<8g} {fd:.12e}  {abs(fd - exact):.2e}")
