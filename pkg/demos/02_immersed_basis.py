"""One immersed element up close.

On an element cut by the interface each nodal basis function is a pair of
affine pieces.  Six conditions fix the six coefficients: the three nodal
values, continuity at the two cut points D and E, and continuity of the
flux beta * d/dn across the segment DE.  This script builds the basis for a
single element crossed by a straight line and prints what it looks like.

Run:  python demos/02_immersed_basis.py
"""
import numpy as np

from ifecontrol.ifem import build_ife_basis

A, B, C = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
D, E = np.array([0.4, 0.0]), np.array([0.0, 0.7])   # line from D to E cuts off vertex A
beta_plus, beta_minus = 10.0, 1.0
side = [-1, 1, 1]                                     # A inside, B and C outside

basis = build_ife_basis(np.array([A, B, C]), side, D, E, beta_plus, beta_minus)

np.set_printoptions(precision=5, suppress=True)
print("plus-piece coefficients (a, b, c) of phi_i = a + b x + c y")
print(basis.coef_plus)
print("minus-piece coefficients")
print(basis.coef_minus)
print("\nlargest constraint residual:", basis.constraint_residuals().max())

# The kink shows up in the gradients: the tangential derivative is shared
# by both pieces, the normal one jumps by the factor beta-/beta+.
n = basis.segment_normal
t = np.array([-n[1], n[0]])
for i, name in enumerate("ABC"):
    gp, gm = basis.gradient(1)[i], basis.gradient(-1)[i]
    print(f"phi_{name}: d/dt {gp @ t:+.4f} | {gm @ t:+.4f}    d/dn {gp @ n:+.4f} | {gm @ n:+.4f}")

# Sum of the three functions is 1 on both pieces.
x = np.array([[0.1, 0.1], [0.5, 0.4]])
print("\npartition of unity:", basis.evaluate(x, -1).sum(1), basis.evaluate(x, 1).sum(1))
