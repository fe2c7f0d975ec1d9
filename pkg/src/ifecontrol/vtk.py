"""Legacy ASCII VTK writers for triangle fields and interface polylines."""
from __future__ import annotations

import numpy as np

__all__ = ["write_unstructured_grid", "write_polyline", "write_mesh", "write_interface"]

VTK_TRIANGLE = 5


def _scalars(fh, name, values):
    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    for v in np.asarray(values, dtype=float).ravel():
        fh.write(f"{v:.17g}\n")


def _data_sections(fh, n_points, n_cells, point_data, cell_data):
    if point_data:
        fh.write(f"POINT_DATA {n_points}\n")
        for name, vals in point_data.items():
            if np.size(vals) != n_points:
                raise ValueError(f"point field {name!r} has {np.size(vals)} values, expected {n_points}")
            _scalars(fh, name, vals)
    if cell_data:
        fh.write(f"CELL_DATA {n_cells}\n")
        for name, vals in cell_data.items():
            if np.size(vals) != n_cells:
                raise ValueError(f"cell field {name!r} has {np.size(vals)} values, expected {n_cells}")
            _scalars(fh, name, vals)


def _points(fh, pts):
    fh.write(f"POINTS {len(pts)} double\n")
    for x, y in pts:
        fh.write(f"{x:.17g} {y:.17g} 0\n")


def write_unstructured_grid(path, points, triangles, point_data=None, cell_data=None, title="triangles"):
    pts = np.asarray(points, dtype=float)
    tri = np.asarray(triangles, dtype=np.int64)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        _points(fh, pts)
        fh.write(f"CELLS {len(tri)} {4 * len(tri)}\n")
        for a, b, c in tri:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {len(tri)}\n")
        fh.write(f"{VTK_TRIANGLE}\n" * len(tri))
        _data_sections(fh, len(pts), len(tri), point_data, cell_data)


def write_polyline(path, p0, p1, point_data=None, cell_data=None, title="interface"):
    """Segments ``p0[s] -> p1[s]`` as POLYDATA lines; every segment gets its
    own two points so segment-wise data stays discontinuous."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    ns = len(p0)
    pts = np.empty((2 * ns, 2))
    pts[0::2] = p0
    pts[1::2] = p1
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\n")
        _points(fh, pts)
        fh.write(f"LINES {ns} {3 * ns}\n")
        for s in range(ns):
            fh.write(f"2 {2 * s} {2 * s + 1}\n")
        _data_sections(fh, 2 * ns, ns, point_data, cell_data)


def write_mesh(path, mesh, cls=None):
    """The background triangulation, tagged with element side (0 = cut)."""
    cell_data = None if cls is None else {"side": cls.element_side}
    write_unstructured_grid(path, mesh.nodes, mesh.triangles, cell_data=cell_data, title="mesh")


def write_interface(path, poly, cell_data=None):
    write_polyline(path, poly.p0, poly.p1, cell_data=cell_data, title="discrete interface")


def write_cell_fields(path, space, fields, title="fields"):
    """Fields sampled at the vertices of every cell, with duplicated points
    so that values may jump across cell boundaries.  ``fields`` maps names
    to arrays of shape (num_cells, 3)."""
    pts = space.cell_tris.reshape(-1, 2)
    tri = np.arange(pts.shape[0]).reshape(-1, 3)
    point_data = {k: np.asarray(v).reshape(-1) for k, v in fields.items()}
    write_unstructured_grid(path, pts, tri, point_data=point_data,
                            cell_data={"side": space.cell_side}, title=title)
