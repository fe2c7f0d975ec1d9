"""A full convergence study for the zero-control manufactured case.

Same as the command

    ifecontrol run --case 1 --n 32,64,128,256

but driven from Python, so the individual errors are at hand afterwards.
Each row solves the optimality system by the projected fixed-point loop
(state solve, adjoint solve, control update) on an N x N grid.

Run:  python demos/03_convergence_table.py          (about 10 seconds)
"""
from ifecontrol.verify import format_study_table, get_case, run_convergence_study

case = get_case(1)
rows = run_convergence_study(case, n_list=[32, 64, 128, 256])
print(format_study_table(rows))

last = rows[-1]
print(f"\nfinest grid: {last.iterations} fixed-point iterations, {last.wall_seconds:.1f} s")
print("order of the state error between the two finest grids:", round(last.orders["l2_omega_y"], 3))
