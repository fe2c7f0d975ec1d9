"""Where the interface sits on the background grid.

The waterdrop phi = 9/4 r^4 - 2 x r^2 + 3 y^2 is a closed curve with a cusp
at the origin and a rounded tip near x = 8/9.  A uniform triangulation of
[-1, 1]^2 never follows it; instead every element is classified by the
signs of phi at its vertices and the interface is replaced, element by
element, by the straight segment joining the two edge crossings.

Run:  python demos/01_interface_geometry.py
"""
import numpy as np

from ifecontrol.geometry import WaterdropLevelSet, closest_point_on_interface
from ifecontrol.mesh import build_mesh, classify_elements, extract_interface_polyline

ls = WaterdropLevelSet()

print("N     cut elements   segments   length of Gamma_h   plus area")
for n in (16, 32, 64, 128, 256):
    mesh = build_mesh(n=n)
    cls = classify_elements(mesh, ls)
    poly = extract_interface_polyline(cls)
    print(f"{n:<5d} {cls.num_interface:>12d} {len(poly):>10d} {poly.total_length:>19.10f} {cls.plus_polygon_area():>11.8f}")

# The discrete curve approaches the true one at second order.  Measure the
# gap between segment midpoints and their closest points on Gamma.
print("\nN     max |midpoint - closest point|")
for n in (32, 64, 128):
    poly = extract_interface_polyline(classify_elements(build_mesh(n=n), ls))
    gap = np.linalg.norm(poly.midpoints - closest_point_on_interface(ls, poly.midpoints), axis=1)
    print(f"{n:<5d} {gap.max():.3e}")

# The hardest place for a straight-segment model is the tip, where the
# radius of curvature is about 0.165.  Curvature = |phi_yy| / |phi_x| there.
tip = np.array([8.0 / 9.0, 0.0])
phi_x = ls.gradient(tip)[0]
phi_yy = 9.0 * tip[0] ** 2 - 4.0 * tip[0] + 6.0
print(f"\ntip curvature {phi_yy / phi_x:.3f}, radius {phi_x / phi_yy:.3f}")
for n in (32, 64, 128, 256):
    print(f"  N={n:<4d} h / radius = {2.0 / n * phi_yy / phi_x:.3f}")
