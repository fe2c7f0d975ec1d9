"""Immersed finite element space on a classified uniform mesh.

Every function in the space is affine on each *cell*.  A cell is either a
whole non-interface triangle or one of the sub-triangles tiling the plus
and minus pieces of an interface element.  Storing, per cell, the global
nodes that are active there and the value/gradient of each of their basis
functions lets mass, stiffness, loads, cost and error integrals all run
through the same vectorised quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, closest_point_on_interface
from .linalg_core import SingularMatrixError, lu_solve_small

__all__ = [
    "IFEBasis",
    "build_ife_basis",
    "ConformingPiece",
    "choose_auxiliary_split",
    "build_conforming_basis",
    "IFESpace",
    "build_ife_space",
    "EnrichmentField",
    "build_enrichment",
]


def _affine_from_values(tris, values):
    """Gradient of the affine interpolant of vertex ``values`` on ``tris``.

    ``tris`` is (n, 3, 2); ``values`` is (n, 3, m).  Returns gradients
    (n, m, 2).
    """
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    dv1 = values[:, 1] - values[:, 0]
    dv2 = values[:, 2] - values[:, 0]
    gx = (dv1 * e2[:, 1, None] - dv2 * e1[:, 1, None]) / det[:, None]
    gy = (dv2 * e1[:, 0, None] - dv1 * e2[:, 0, None]) / det[:, None]
    return np.stack([gx, gy], axis=-1)


def _tri_area(tris):
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


# ---------------------------------------------------------------------------
# Element-local nonconforming basis
# ---------------------------------------------------------------------------

@dataclass
class IFEBasis:
    """The three immersed basis functions of one interface element.

    Row ``i`` of ``coef_plus`` holds ``(a, b, c)`` with
    ``phi_i = a + b*x + c*y`` on the plus piece; ``coef_minus`` likewise.
    """

    element: int
    vertices: np.ndarray
    vertex_side: np.ndarray
    D: np.ndarray
    E: np.ndarray
    beta_plus: float
    beta_minus: float
    coef_plus: np.ndarray
    coef_minus: np.ndarray

    def evaluate(self, x, side):
        """Values (m, 3) of the three basis functions at points on ``side``."""
        X = np.atleast_2d(np.asarray(x, dtype=float))
        C = self.coef_plus if side > 0 else self.coef_minus
        return C[:, 0] + X[:, :1] * C[:, 1] + X[:, 1:] * C[:, 2]

    def gradient(self, side):
        C = self.coef_plus if side > 0 else self.coef_minus
        return C[:, 1:].copy()

    @property
    def segment_normal(self):
        t = self.E - self.D
        n = np.array([-t[1], t[0]])
        return n / np.linalg.norm(n)

    def constraint_residuals(self):
        """Absolute residuals (3 basis functions x 6 constraints)."""
        res = np.zeros((3, 6))
        for j in range(3):
            vals = self.evaluate(self.vertices[j], self.vertex_side[j])[0]
            res[:, j] = vals - (np.arange(3) == j)
        for col, P in ((3, self.D), (4, self.E)):
            res[:, col] = self.evaluate(P, 1)[0] - self.evaluate(P, -1)[0]
        n = self.segment_normal
        res[:, 5] = self.beta_plus * self.gradient(1) @ n - self.beta_minus * self.gradient(-1) @ n
        return np.abs(res)


def build_ife_basis(vertices, vertex_side, D, E, beta_plus, beta_minus, element=-1):
    """Solve the nodal, continuity and flux constraints for all three basis
    functions of one interface element.

    ``vertex_side[j]`` names the piece (+1 or -1) whose affine function must
    take the nodal value at vertex ``j``.  The flux condition is imposed
    across the straight segment ``DE``.
    """
    V = np.asarray(vertices, dtype=float)
    side = np.asarray(vertex_side, dtype=int)
    D = np.asarray(D, dtype=float)
    E = np.asarray(E, dtype=float)
    if beta_plus <= 0 or beta_minus <= 0:
        raise ValueError("diffusion coefficients must be positive")
    if not np.all(np.isin(side, (-1, 1))):
        raise ValueError(f"vertex sides must be +1 or -1, got {side}")
    # scaled local coordinates keep the 6x6 system well conditioned
    origin = V[0]
    h = max(np.linalg.norm(V[1] - V[0]), np.linalg.norm(V[2] - V[0]))
    loc = lambda P: (P - origin) / h  # noqa: E731
    t = E - D
    n = np.array([-t[1], t[0]])
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise GeometryError(f"element {element}: coincident interface points")
    n /= nn

    A = np.zeros((6, 6))
    for j in range(3):
        xi = loc(V[j])
        off = 0 if side[j] > 0 else 3
        A[j, off:off + 3] = [1.0, xi[0], xi[1]]
    for row, P in ((3, D), (4, E)):
        xi = loc(P)
        A[row] = [1.0, xi[0], xi[1], -1.0, -xi[0], -xi[1]]
    A[5] = [0.0, beta_plus * n[0], beta_plus * n[1], 0.0, -beta_minus * n[0], -beta_minus * n[1]]
    rhs = np.zeros((6, 3))
    rhs[:3] = np.eye(3)
    try:
        X = lu_solve_small(A, rhs)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"element {element}: degenerate IFE constraint system ({exc})") from exc

    def to_global(block):
        b = block[1] / h
        c = block[2] / h
        a = block[0] - b * origin[0] - c * origin[1]
        return np.column_stack([a, b, c])

    return IFEBasis(int(element), V, side, D, E, float(beta_plus), float(beta_minus),
                    to_global(X[:3]), to_global(X[3:]))


# ---------------------------------------------------------------------------
# Conforming variant: averaged interface values and a three-triangle split
# ---------------------------------------------------------------------------

def _min_angle(tri):
    best = np.pi
    for k in range(3):
        u = tri[(k + 1) % 3] - tri[k]
        v = tri[(k + 2) % 3] - tri[k]
        cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        best = min(best, float(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return best


def choose_auxiliary_split(A, B, C, D, E):
    """Pick the auxiliary line that splits quadrilateral ``D B C E``.

    Returns ``"BE"`` or ``"DC"``, whichever yields the larger smallest angle
    among the two resulting triangles (ties go to ``"BE"``).
    """
    A, B, C, D, E = (np.asarray(P, dtype=float) for P in (A, B, C, D, E))
    be = min(_min_angle(np.array([D, B, E])), _min_angle(np.array([B, C, E])))
    dc = min(_min_angle(np.array([D, B, C])), _min_angle(np.array([D, C, E])))
    return "BE" if be >= dc else "DC"


@dataclass
class ConformingPiece:
    """Piecewise-affine function on ``A B C`` split into three triangles.

    ``tris`` holds the triangles; ``labels`` their vertex labels drawn from
    ``"ABCDE"``; ``coef[t]`` the rows ``(a, b, c)`` per input value set.
    """

    tris: np.ndarray
    labels: tuple
    split: str
    coef: np.ndarray

    def evaluate(self, t, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        C = self.coef[t]
        return C[:, 0] + X[:, :1] * C[:, 1] + X[:, 1:] * C[:, 2]


def build_conforming_basis(A, B, C, D, E, values):
    """Affine interpolation on the three sub-triangles of ``A B C``.

    ``A`` is the vertex cut off by the interface, ``D`` lies on ``AB`` and
    ``E`` on ``AC``.  ``values`` has shape (5,) or (5, m) giving the
    prescribed values at ``A, B, C, D, E``.
    """
    pts = {k: np.asarray(P, dtype=float) for k, P in zip("ABCDE", (A, B, C, D, E))}
    vals = np.asarray(values, dtype=float)
    vals = vals.reshape(5, -1)
    split = choose_auxiliary_split(*(pts[k] for k in "ABCDE"))
    labels = ("ADE", "DBE", "BCE") if split == "BE" else ("ADE", "DBC", "DCE")
    tris = np.array([[pts[c] for c in lab] for lab in labels])
    idx = {k: i for i, k in enumerate("ABCDE")}
    tv = np.array([[vals[idx[c]] for c in lab] for lab in labels])
    grad = _affine_from_values(tris, tv)
    a = tv[:, 0] - grad[..., 0] * tris[:, 0, 0, None] - grad[..., 1] * tris[:, 0, 1, None]
    coef = np.stack([a, grad[..., 0], grad[..., 1]], axis=-1)
    return ConformingPiece(tris, labels, split, coef)


# ---------------------------------------------------------------------------
# The assembled space
# ---------------------------------------------------------------------------

@dataclass
class IFESpace:
    """Cell-wise description of the immersed space.

    ``cell_nodes[c]`` lists up to ``K`` global nodes (``-1`` padding) whose
    basis functions live on cell ``c``; ``cell_val[c, k]`` is the value of
    that basis function at ``cell_ref[c]`` and ``cell_grad[c, k]`` its
    gradient.  ``elem_cells[e]`` lists the cells of element ``e`` (``-1``
    padding).
    """

    mesh: object
    cls: object
    beta_plus: float
    beta_minus: float
    variant: str
    cell_elem: np.ndarray
    cell_side: np.ndarray
    cell_tris: np.ndarray
    cell_area: np.ndarray
    cell_ref: np.ndarray
    cell_nodes: np.ndarray
    cell_val: np.ndarray
    cell_grad: np.ndarray
    elem_cells: np.ndarray
    trace_cell: np.ndarray
    bases: list = field(repr=False)
    fallback_elements: list = field(default_factory=list)

    @property
    def num_cells(self):
        return self.cell_elem.size

    @property
    def num_nodes(self):
        return self.mesh.num_nodes

    @property
    def cell_beta(self):
        return np.where(self.cell_side > 0, self.beta_plus, self.beta_minus)

    def basis_values(self, cells, pts):
        """Basis values (m, K) of the cell's active nodes at points (m, 2)."""
        d = pts - self.cell_ref[cells]
        return self.cell_val[cells] + np.einsum("mkd,md->mk", self.cell_grad[cells], d)

    def evaluate_cells(self, u, cells, pts):
        """Values of the nodal field ``u`` at ``pts`` (m, 2) inside ``cells``."""
        B = self.basis_values(cells, pts)
        U = np.where(self.cell_nodes[cells] >= 0, u[self.cell_nodes[cells]], 0.0)
        return np.sum(B * U, axis=-1)

    def gradient_cells(self, u, cells):
        U = np.where(self.cell_nodes[cells] >= 0, u[self.cell_nodes[cells]], 0.0)
        return np.einsum("mkd,mk->md", self.cell_grad[cells], U)

    def locate_cells(self, pts):
        """Cell containing each point (largest smallest barycentric weight
        among the cells of the enclosing element)."""
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        elems = self.mesh.locate(P)
        cand = self.elem_cells[elems]
        best = np.full(P.shape[0], -np.inf)
        out = cand[:, 0].copy()
        for k in range(cand.shape[1]):
            c = cand[:, k]
            ok = c >= 0
            lam = _barycentric(self.cell_tris[np.where(ok, c, 0)], P).min(axis=-1)
            better = ok & (lam > best)
            best = np.where(better, lam, best)
            out = np.where(better, c, out)
        return out

    def evaluate(self, u, pts):
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.evaluate_cells(np.asarray(u, dtype=float), self.locate_cells(P), P)

    def evaluate_trace(self, u, owner, pts):
        """Values on the discrete interface; ``owner`` indexes ``cls.interface``."""
        return self.evaluate_cells(np.asarray(u, dtype=float), self.trace_cell[owner], pts)


def _barycentric(tris, P):
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    d = P - tris[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def _edge_neighbors(mesh):
    """Map (element, local edge) to the element across it, -1 on the boundary."""
    tri = mesh.triangles
    m = mesh.num_nodes
    a = tri[:, [0, 1, 2]].ravel()
    b = tri[:, [1, 2, 0]].ravel()
    keys = np.minimum(a, b) * m + np.maximum(a, b)
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    nbr = np.full(keys.size, -1, dtype=np.int64)
    same = sk[1:] == sk[:-1]
    i = np.flatnonzero(same)
    nbr[order[i]] = order[i + 1] // 3
    nbr[order[i + 1]] = order[i] // 3
    return nbr.reshape(-1, 3)


def build_ife_space(mesh, cls, beta_plus, beta_minus, variant="nonconforming"):
    """Build the immersed space; ``variant`` is ``"nonconforming"`` or ``"conforming"``."""
    if variant not in ("nonconforming", "conforming"):
        raise ValueError(f"unknown IFE variant {variant!r}")
    tri = mesh.triangles
    ni = cls.num_interface
    bases = []
    for k, e in enumerate(cls.interface):
        D, E = cls.cut_points[k]
        bases.append(build_ife_basis(mesh.nodes[tri[e]], cls.vertex_side[k], D, E,
                                     beta_plus, beta_minus, element=e))

    K = 5 if variant == "conforming" else 3
    plain = np.flatnonzero(~cls.is_interface)
    ptris = mesh.nodes[tri[plain]]
    pgrad = _affine_from_values(ptris, np.broadcast_to(np.eye(3), (plain.size, 3, 3)))
    pref = ptris.mean(axis=1)
    cells = {
        "elem": [plain], "side": [cls.element_side[plain]], "tris": [ptris],
        "nodes": [np.pad(tri[plain], ((0, 0), (0, K - 3)), constant_values=-1)],
        "val": [np.pad(np.full((plain.size, 3), 1.0 / 3.0), ((0, 0), (0, K - 3)))],
        "grad": [np.pad(pgrad, ((0, 0), (0, K - 3), (0, 0)))],
        "ref": [pref],
    }

    # nonconforming sub-triangle cells
    nb = _edge_neighbors(mesh) if variant == "conforming" else None
    fallback = []
    sub_elem, sub_side, sub_tris, sub_nodes, sub_val, sub_grad, sub_ref = [], [], [], [], [], [], []
    trace_cell_local = np.zeros(ni, dtype=np.int64)
    for k, e in enumerate(cls.interface):
        piece = None
        if variant == "conforming":
            piece = _conforming_element(mesh, cls, bases, nb, k)
            if piece is None:
                fallback.append(int(e))
        if piece is not None:
            tris3, nodes5, coef, sides = piece
            ref = tris3.mean(axis=1)
            for t in range(3):
                sub_elem.append(e)
                sub_side.append(sides[t])
                sub_tris.append(tris3[t])
                sub_nodes.append(nodes5)
                sub_val.append(coef[t, :, 0] + coef[t, :, 1] * ref[t, 0] + coef[t, :, 2] * ref[t, 1])
                sub_grad.append(coef[t, :, 1:])
                sub_ref.append(ref[t])
            trace_cell_local[k] = len(sub_elem) - 3
            continue
        sel = np.flatnonzero(cls.sub_owner == k)
        first_plus = None
        for s in sel:
            side = int(cls.sub_side[s])
            C = bases[k].coef_plus if side > 0 else bases[k].coef_minus
            ref = cls.sub_tris[s].mean(axis=0)
            nodes = np.full(K, -1, dtype=np.int64)
            nodes[:3] = tri[e]
            val = np.zeros(K)
            val[:3] = C[:, 0] + C[:, 1] * ref[0] + C[:, 2] * ref[1]
            grad = np.zeros((K, 2))
            grad[:3] = C[:, 1:]
            if first_plus is None and side > 0:
                first_plus = len(sub_elem)
            sub_elem.append(e)
            sub_side.append(side)
            sub_tris.append(cls.sub_tris[s])
            sub_nodes.append(nodes)
            sub_val.append(val)
            sub_grad.append(grad)
            sub_ref.append(ref)
        trace_cell_local[k] = first_plus

    if sub_elem:
        cells["elem"].append(np.array(sub_elem, dtype=np.int64))
        cells["side"].append(np.array(sub_side, dtype=np.int64))
        cells["tris"].append(np.array(sub_tris))
        cells["nodes"].append(np.array(sub_nodes, dtype=np.int64))
        cells["val"].append(np.array(sub_val))
        cells["grad"].append(np.array(sub_grad))
        cells["ref"].append(np.array(sub_ref))
    cat = {key: np.concatenate(v) for key, v in cells.items()}
    # canonical ordering: by element, then by construction order
    order = np.argsort(cat["elem"], kind="stable")
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    cat = {key: v[order] for key, v in cat.items()}
    trace_cell = inv[plain.size + trace_cell_local] if ni else np.zeros(0, dtype=np.int64)

    counts = np.bincount(cat["elem"], minlength=mesh.num_elements)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    width = int(counts.max())
    elem_cells = np.full((mesh.num_elements, width), -1, dtype=np.int64)
    for j in range(width):
        has = counts > j
        elem_cells[has, j] = start[has] + j

    return IFESpace(
        mesh=mesh, cls=cls, beta_plus=float(beta_plus), beta_minus=float(beta_minus),
        variant=variant, cell_elem=cat["elem"], cell_side=cat["side"], cell_tris=cat["tris"],
        cell_area=_tri_area(cat["tris"]), cell_ref=cat["ref"], cell_nodes=cat["nodes"],
        cell_val=cat["val"], cell_grad=cat["grad"], elem_cells=elem_cells,
        trace_cell=trace_cell, bases=bases, fallback_elements=fallback,
    )


def _conforming_element(mesh, cls, bases, nb, k):
    """Five-node conforming description of interface element ``k`` or None
    when the construction does not apply (interface through a vertex)."""
    e = cls.interface[k]
    loc = cls.cut_local[k]
    if np.any(loc < 3):
        return None
    sv = cls.node_sign[mesh.triangles[e]]
    a = int(np.flatnonzero(sv != np.sign(sv.sum()))[0])
    b, c = (a + 1) % 3, (a + 2) % 3
    edge_ab, edge_ac = 3 + a, 3 + c
    if set(loc.tolist()) != {edge_ab, edge_ac}:
        return None
    iD = int(np.flatnonzero(loc == edge_ab)[0])
    D = cls.cut_points[k, iD]
    E = cls.cut_points[k, 1 - iD]
    vid = mesh.triangles[e]
    V = mesh.nodes[vid]
    A, B, C = V[a], V[b], V[c]

    def opposite(nbr_elem, shared):
        others = [int(v) for v in mesh.triangles[nbr_elem] if v not in shared]
        return others[0]

    nodes = [int(vid[a]), int(vid[b]), int(vid[c])]
    own = bases[k]
    own_D = own.evaluate(D, 1)[0]
    own_E = own.evaluate(E, 1)[0]
    valD = np.zeros(5)
    valE = np.zeros(5)
    for pos, src in enumerate((a, b, c)):
        valD[pos] += own_D[src]
        valE[pos] += own_E[src]
    extra = []
    for P, vals, local_edge in ((D, valD, a), (E, valE, c)):
        nbr = nb[e, local_edge]
        npos = cls.position[nbr] if nbr >= 0 else -1
        if nbr < 0 or npos < 0:
            extra.append(-1)
            continue  # no neighbour: keep the element's own value
        far = opposite(nbr, set(vid.tolist()))
        extra.append(far)
        nb_vals = bases[npos].evaluate(P, 1)[0]
        nb_ids = mesh.triangles[nbr]
        vals *= 0.5
        for j, g in enumerate(nb_ids):
            g = int(g)
            if g in nodes:
                vals[nodes.index(g)] += 0.5 * nb_vals[j]
            else:
                vals[3 if P is D else 4] += 0.5 * nb_vals[j]
    nodes5 = np.array(nodes + extra, dtype=np.int64)
    values = np.zeros((5, 5))
    values[:3, :3] = np.eye(3)
    values[3] = valD
    values[4] = valE
    piece = build_conforming_basis(A, B, C, D, E, values)
    side_A = int(sv[a])
    sides = [side_A, -side_A, -side_A]
    coef = np.where((nodes5 >= 0)[None, :, None], piece.coef, 0.0)
    return piece.tris, nodes5, coef, sides


# ---------------------------------------------------------------------------
# Enrichment for a nonhomogeneous flux jump
# ---------------------------------------------------------------------------

@dataclass
class EnrichmentField:
    """Piecewise-affine field supported on interface elements.

    ``node_tilde`` holds the extended jump profile at the nodes of interface
    elements (zero elsewhere).  On cell ``c`` the field equals
    ``cell_val[c] + cell_grad[c] . (x - space.cell_ref[c])``.
    """

    space: IFESpace
    node_tilde: np.ndarray
    cell_val: np.ndarray
    cell_grad: np.ndarray

    def is_zero(self):
        return not (np.any(self.cell_val) or np.any(self.cell_grad))

    def evaluate_cells(self, cells, pts):
        return self.cell_val[cells] + np.einsum("md,md->m", self.cell_grad[cells], pts - self.space.cell_ref[cells])

    def evaluate(self, pts):
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.evaluate_cells(self.space.locate_cells(P), P)


@dataclass
class NodeProjection:
    """Closest points and signed distances for the nodes of interface elements."""

    nodes: np.ndarray
    foot: np.ndarray
    distance: np.ndarray


def project_interface_nodes(space, ls):
    nodes = np.unique(space.mesh.triangles[space.cls.interface])
    X = space.mesh.nodes[nodes]
    foot = closest_point_on_interface(ls, X)
    if not np.all(np.isfinite(foot)):
        raise GeometryError("closest-point projection failed for an interface-element node")
    phi = space.cls.node_phi[nodes]
    dist = np.sign(phi) * np.linalg.norm(X - foot, axis=-1)
    return NodeProjection(nodes, foot, dist)


def build_enrichment(space, jump_at, proj=None, ls=None):
    """Enrichment for the flux-jump profile ``jump_at``.

    ``jump_at`` maps an array of interface points (the closest points of
    interface-element nodes) to jump values; it may also be an array already
    holding those values in ``proj.nodes`` order.
    """
    if proj is None:
        if ls is None:
            ls = space.cls.levelset
        proj = project_interface_nodes(space, ls)
    jvals = np.asarray(jump_at(proj.foot) if callable(jump_at) else jump_at, dtype=float)
    tilde = np.zeros(space.num_nodes)
    tilde[proj.nodes] = jvals * proj.distance / space.beta_minus
    return enrichment_from_tilde(space, tilde)


def enrichment_from_tilde(space, tilde):
    """Assemble ``H(phi) I_h t - Pi_h(H(phi) t)`` cell by cell.

    ``I_h`` is the ordinary linear interpolant over the element and
    ``Pi_h`` the interpolant in the immersed space, so the second term has
    no flux jump of its own and the field vanishes at every node.
    """
    cls = space.cls
    mesh = space.mesh
    tri = mesh.triangles
    cell_val = np.zeros(space.num_cells)
    cell_grad = np.zeros((space.num_cells, 2))
    icells = np.flatnonzero(cls.is_interface[space.cell_elem])
    if icells.size == 0 or not np.any(tilde):
        return EnrichmentField(space, tilde, cell_val, cell_grad)
    ht = np.where(cls.node_phi < 0, tilde, 0.0)
    nodes = space.cell_nodes[icells]
    hv = np.where(nodes >= 0, ht[np.maximum(nodes, 0)], 0.0)
    low_ref = np.einsum("ck,ck->c", space.cell_val[icells], hv)
    low = np.einsum("ckd,ck->cd", space.cell_grad[icells], hv)

    V = mesh.nodes[tri[space.cell_elem[icells]]]
    t = tilde[tri[space.cell_elem[icells]]]
    full = _affine_from_values(V, t[:, :, None])[:, 0]
    ref = space.cell_ref[icells]
    full_ref = t[:, 0] + np.einsum("md,md->m", full, ref - V[:, 0])
    minus = space.cell_side[icells] < 0
    cell_val[icells] = np.where(minus, full_ref, 0.0) - low_ref
    cell_grad[icells] = np.where(minus[:, None], full, 0.0) - low
    return EnrichmentField(space, tilde, cell_val, cell_grad)
