"""Uniform triangulations, element classification and the discrete interface."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, InterfaceSegment, edge_intersections

__all__ = [
    "MeshTooCoarseError",
    "UniformTriMesh",
    "ElementClassification",
    "InterfacePolyline",
    "build_mesh",
    "classify_elements",
    "extract_interface_polyline",
]

SNAP_RTOL = 1e-12
EDGE_SAMPLES = 9


class MeshTooCoarseError(GeometryError):
    """The interface crosses an edge more often than the method allows."""


@dataclass
class UniformTriMesh:
    """Structured triangulation of a rectangle.

    Node ``k = j*(n+1) + i`` sits at ``(x0 + i*hx, y0 + j*hy)``.  Each grid
    square is cut along its bottom-left to top-right diagonal into the
    triangles ``(a, b, c)`` and ``(a, c, d)``, both counter-clockwise.
    """

    n: int
    domain: tuple
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray

    @property
    def hx(self):
        return (self.domain[1] - self.domain[0]) / self.n

    @property
    def hy(self):
        return (self.domain[3] - self.domain[2]) / self.n

    @property
    def h(self):
        return max(self.hx, self.hy)

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_elements(self):
        return self.triangles.shape[0]

    def element_vertices(self, elems=None):
        tri = self.triangles if elems is None else self.triangles[elems]
        return self.nodes[tri]

    def areas(self):
        v = self.element_vertices()
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def locate(self, points):
        """Element index containing each point (closed triangles, ties arbitrary)."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        sx = (P[:, 0] - self.domain[0]) / self.hx
        sy = (P[:, 1] - self.domain[2]) / self.hy
        i = np.clip(np.floor(sx).astype(np.int64), 0, self.n - 1)
        j = np.clip(np.floor(sy).astype(np.int64), 0, self.n - 1)
        upper = (sy - j) > (sx - i)
        return 2 * (j * self.n + i) + upper.astype(np.int64)


def build_mesh(domain=(-1.0, 1.0, -1.0, 1.0), n=32):
    """Uniform mesh with ``n`` subdivisions per side of ``domain``."""
    n = int(n)
    if n < 2:
        raise ValueError(f"need at least 2 subdivisions per side, got {n}")
    x0, x1, y0, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain}")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = (j * (n + 1) + i).ravel()
    b, c, d = a + 1, a + n + 2, a + n + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])

    jj, ii = np.divmod(np.arange(nodes.shape[0]), n + 1)
    boundary = np.flatnonzero((ii == 0) | (ii == n) | (jj == 0) | (jj == n))
    return UniformTriMesh(n, (x0, x1, y0, y1), nodes, tris, boundary)


@dataclass
class ElementClassification:
    """Interface/non-interface labels plus the cut geometry of interface elements.

    Per-interface-element arrays are indexed by position in ``interface``
    (the global element ids).  ``cut_points[k] = (D, E)`` with matching
    global keys in ``cut_keys`` (``>= 0`` for edge crossings, ``< 0`` for a
    vertex lying on the interface).  ``sub_*`` arrays describe the triangles
    tiling the plus and minus pieces of every interface element.
    """

    mesh: UniformTriMesh
    levelset: object
    node_phi: np.ndarray
    node_sign: np.ndarray
    is_interface: np.ndarray
    element_side: np.ndarray
    interface: np.ndarray
    cut_points: np.ndarray
    cut_keys: np.ndarray
    cut_local: np.ndarray
    vertex_side: np.ndarray
    area_plus: np.ndarray
    area_minus: np.ndarray
    sub_tris: np.ndarray
    sub_owner: np.ndarray
    sub_side: np.ndarray
    position: np.ndarray = field(repr=False)

    @property
    def num_interface(self):
        return self.interface.size

    def plus_polygon_area(self):
        """Area of the discrete plus sub-domain."""
        full = self.mesh.areas()[(~self.is_interface) & (self.element_side > 0)].sum()
        return full + self.area_plus.sum()


def _edge_key(a, b, m):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return lo * m + hi


def _polygon_area(pts):
    pts = np.asarray(pts) - pts[0]  # local origin avoids cancellation
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _check_edge_crossings(mesh, ls, phi, sign, h):
    """Sample every edge near the interface; more crossings than the vertex
    signs imply means the mesh cannot resolve the interface."""
    grad = np.linalg.norm(ls.gradient(mesh.nodes), axis=-1)
    near = np.abs(phi) <= 2.0 * h * grad + 1e-14
    tri = mesh.triangles
    cand = near[tri].any(axis=1)
    if not cand.any():
        return
    t = tri[cand]
    a = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    b = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    keys, first = np.unique(_edge_key(a, b, mesh.num_nodes), return_index=True)
    a, b = a[first], b[first]
    s = np.linspace(0.0, 1.0, EDGE_SAMPLES + 2)[1:-1]
    P, Q = mesh.nodes[a], mesh.nodes[b]
    pts = P[:, None, :] + s[None, :, None] * (Q - P)[:, None, :]
    inner = np.sign(ls.value(pts))
    sa, sb = sign[a], sign[b]
    seq = np.column_stack([sa, inner, sb]).astype(float)
    seq[seq == 0] = np.nan
    changes = np.zeros(len(a), dtype=int)
    prev = seq[:, 0].copy()
    for k in range(1, seq.shape[1]):
        cur = seq[:, k]
        valid = ~np.isnan(cur)
        flip = valid & ~np.isnan(prev) & (cur != prev)
        changes += flip
        prev = np.where(valid, cur, prev)
    expected = ((sa * sb) < 0).astype(int)
    both_zero = (sa == 0) & (sb == 0)
    bad = (changes != expected) & ~both_zero
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise MeshTooCoarseError(
            f"interface crosses edge {mesh.nodes[a[k]]}-{mesh.nodes[b[k]]} {changes[k]} time(s); "
            f"{int(bad.sum())} edge(s) violate the one-crossing rule, refine the mesh")


def classify_elements(mesh, ls, check=True):
    """Label elements and compute the cut geometry of interface elements."""
    h = mesh.h
    phi = ls.value(mesh.nodes)
    snap = SNAP_RTOL * h
    sign = np.sign(phi).astype(np.int64)
    sign[np.abs(phi) <= snap] = 0
    phi = np.where(sign == 0, 0.0, phi)
    if check:
        _check_edge_crossings(mesh, ls, phi, sign, h)

    tri = mesh.triangles
    S = sign[tri]
    has_pos = (S > 0).any(axis=1)
    has_neg = (S < 0).any(axis=1)
    if np.any(~has_pos & ~has_neg):
        raise MeshTooCoarseError("an element has all three vertices on the interface")
    is_iface = has_pos & has_neg
    side = np.where(has_pos, 1, -1)
    side[is_iface] = 0
    iface = np.flatnonzero(is_iface)
    m = mesh.num_nodes

    # roots on every sign-changing edge of an interface element, once per edge
    ti = tri[iface]
    a = np.concatenate([ti[:, 0], ti[:, 1], ti[:, 2]])
    b = np.concatenate([ti[:, 1], ti[:, 2], ti[:, 0]])
    crossing = sign[a] * sign[b] < 0
    keys = _edge_key(a[crossing], b[crossing], m)
    ukeys, first = np.unique(keys, return_index=True)
    ea, eb = a[crossing][first], b[crossing][first]
    roots = edge_intersections(ls, mesh.nodes[ea], mesh.nodes[eb], phi[ea], phi[eb])
    root_of = dict(zip(ukeys.tolist(), range(ukeys.size)))

    ni = iface.size
    cut_points = np.zeros((ni, 2, 2))
    cut_keys = np.zeros((ni, 2), dtype=np.int64)
    cut_local = np.zeros((ni, 2), dtype=np.int64)
    vertex_side = np.zeros((ni, 3), dtype=np.int64)
    area_plus = np.zeros(ni)
    area_minus = np.zeros(ni)
    sub_tris, sub_owner, sub_side = [], [], []
    for k, e in enumerate(iface):
        vid = tri[e]
        sv = sign[vid]
        verts = mesh.nodes[vid]
        loop = []  # (point, sign, cut key, local id: 0..2 vertex, 3..5 edge)
        for l in range(3):
            if sv[l] == 0:
                loop.append((verts[l], 0, -(int(vid[l]) + 1), l))
            else:
                loop.append((verts[l], int(sv[l]), None, l))
            l2 = (l + 1) % 3
            if sv[l] * sv[l2] < 0:
                key = int(_edge_key(vid[l], vid[l2], m))
                loop.append((roots[root_of[key]], 0, key, 3 + l))
        cuts = [item for item in loop if item[1] == 0]
        if len(cuts) != 2:
            raise MeshTooCoarseError(f"element {e} has {len(cuts)} interface crossings")
        cut_points[k] = [cuts[0][0], cuts[1][0]]
        cut_keys[k] = [cuts[0][2], cuts[1][2]]
        cut_local[k] = [cuts[0][3], cuts[1][3]]
        if np.linalg.norm(cut_points[k, 0] - cut_points[k, 1]) <= snap:
            raise MeshTooCoarseError(f"element {e}: the two crossings coincide")
        polys = {}
        for s in (1, -1):
            pts = np.array([item[0] for item in loop if item[1] in (0, s)])
            polys[s] = pts
            for t in range(1, len(pts) - 1):
                sub_tris.append([pts[0], pts[t], pts[t + 1]])
                sub_owner.append(k)
                sub_side.append(s)
        area_plus[k] = _polygon_area(polys[1])
        area_minus[k] = _polygon_area(polys[-1])
        vs = sv.copy()
        vs[vs == 0] = 1 if area_plus[k] >= area_minus[k] else -1
        vertex_side[k] = vs

    position = np.full(mesh.num_elements, -1, dtype=np.int64)
    position[iface] = np.arange(ni)
    return ElementClassification(
        mesh=mesh, levelset=ls, node_phi=phi, node_sign=sign,
        is_interface=is_iface, element_side=side, interface=iface,
        cut_points=cut_points, cut_keys=cut_keys, cut_local=cut_local,
        vertex_side=vertex_side, area_plus=area_plus, area_minus=area_minus,
        sub_tris=np.array(sub_tris).reshape(-1, 3, 2),
        sub_owner=np.array(sub_owner, dtype=np.int64),
        sub_side=np.array(sub_side, dtype=np.int64),
        position=position,
    )


@dataclass
class InterfacePolyline:
    """The discrete interface as ordered straight segments.

    Arrays are in traversal order; ``owner[s]`` is the position of the
    owning element in ``cls.interface`` and ``element[s]`` its global id.
    Normals point towards the plus sub-domain.
    """

    p0: np.ndarray
    p1: np.ndarray
    owner: np.ndarray
    element: np.ndarray
    normal: np.ndarray
    loops: list

    def __len__(self):
        return self.p0.shape[0]

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, s):
        return self.segments[s]

    @property
    def lengths(self):
        return np.linalg.norm(self.p1 - self.p0, axis=-1)

    @property
    def midpoints(self):
        return 0.5 * (self.p0 + self.p1)

    @property
    def total_length(self):
        return float(self.lengths.sum())

    @property
    def segments(self):
        return [InterfaceSegment(self.p0[s], self.p1[s], int(self.element[s]), self.normal[s])
                for s in range(len(self))]

    def quadrature(self, order=3):
        """Points (ns, k, 2) and weights (ns, k) of a Gauss rule on each segment."""
        from .geometry import segment_rule

        t, w = segment_rule(order)
        pts = self.p0[:, None, :] + t[None, :, None] * (self.p1 - self.p0)[:, None, :]
        return pts, self.lengths[:, None] * w[None, :]


def extract_interface_polyline(cls):
    """Chain the cut segments of all interface elements into closed loops."""
    ni = cls.num_interface
    if ni == 0:
        raise GeometryError("no interface elements: the interface does not cross the mesh")
    ends = {}
    for k in range(ni):
        for key in cls.cut_keys[k]:
            ends.setdefault(int(key), []).append(k)
    for key, segs in ends.items():
        if len(segs) != 2:
            raise GeometryError(f"polyline is open or branching at cut point {key} ({len(segs)} segments)")

    visited = np.zeros(ni, dtype=bool)
    order, flip, loops = [], [], []
    for start in range(ni):
        if visited[start]:
            continue
        loop_start = len(order)
        k, entry = start, int(cls.cut_keys[start, 0])
        while not visited[k]:
            visited[k] = True
            a, b = (int(v) for v in cls.cut_keys[k])
            reverse = a != entry
            order.append(k)
            flip.append(reverse)
            exit_key = a if reverse else b
            nxt = [s for s in ends[exit_key] if s != k]
            k, entry = nxt[0], exit_key
        if k != start:
            raise GeometryError("polyline does not close")
        loops.append(np.arange(loop_start, len(order)))

    order = np.array(order, dtype=np.int64)
    flip = np.array(flip, dtype=bool)
    D = cls.cut_points[order, 0]
    E = cls.cut_points[order, 1]
    p0 = np.where(flip[:, None], E, D)
    p1 = np.where(flip[:, None], D, E)
    t = p1 - p0
    nrm = np.column_stack([-t[:, 1], t[:, 0]]) / np.linalg.norm(t, axis=-1)[:, None]
    # orient towards the plus piece: compare with the plus sub-triangle centroids
    plus_centroid = np.zeros((ni, 2))
    plus_area = np.zeros(ni)
    sel = cls.sub_side > 0
    tri = cls.sub_tris[sel]
    e1, e2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    ar = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    np.add.at(plus_centroid, cls.sub_owner[sel], ar[:, None] * tri.mean(axis=1))
    np.add.at(plus_area, cls.sub_owner[sel], ar)
    plus_centroid /= plus_area[:, None]
    mid = 0.5 * (p0 + p1)
    towards = np.sum((plus_centroid[order] - mid) * nrm, axis=-1)
    nrm[towards < 0] *= -1.0
    return InterfacePolyline(p0, p1, order, cls.interface[order], nrm, loops)
