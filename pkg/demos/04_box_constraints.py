"""Control with bounds: the clipped-sine case.

Here the exact control is max(0, sin(2 pi x)) on the interface, which is
the projection of sin(2 pi x) onto the box [0, 1].  Wherever the sine is
negative the lower bound is active, so roughly half of the interface
segments should end up exactly at zero.

Run:  python demos/04_box_constraints.py
"""
import numpy as np

from ifecontrol.optimize import build_problem, fixed_point_solve
from ifecontrol.verify import error_norms, get_case

case = get_case(2)
prob = build_problem(case, 128)
sol = fixed_point_solve(prob)

print(f"converged in {sol.iterations} iterations")
for k, (change, cost) in enumerate(zip(sol.history, sol.costs), start=1):
    print(f"  k={k}  max change {change:.3e}  cost {cost:.10e}")

u = sol.control.values
x = prob.poly.midpoints[:, 0]
active = u == 0.0
print(f"\n{active.mean():.1%} of {u.size} segments sit at the lower bound")
print(f"all of them have sin(2 pi x) <= 0: {bool(np.all(np.sin(2 * np.pi * x[active]) <= 1e-12))}")
print(f"upper bound touched: {bool(np.any(u == 1.0))}")

e = error_norms(sol, case)
print(f"\nL2 control error {e.l2_gamma_u:.3e}, max control error {e.linf_gamma_u:.3e}")
