"""Conforming triangular meshes for the duct geometries.

Meshes are immutable after construction: every operation returns a new
mesh. Vertices are only ever appended by ``conform_to_levelset`` and
``refine_mesh``, so vertex indices of an ancestor mesh stay valid in all
of its descendants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

# region tags
AIR = 0
RIGID = 1
DESIGN_AIR = 2
DESIGN_RIGID = 3
NDD_AIR = 4
AIR_TAGS = (AIR, DESIGN_AIR, NDD_AIR)
RIGID_TAGS = (RIGID, DESIGN_RIGID)

# boundary segment labels
L_IN = "in"
L_OUT = "out"
L_REF = "ref"
L_SYM = "sym"
L_WALL = "wall"
L_RIGID = "rigid"        # interface between air and rigid phases
L_DESIGN = "design_edge"  # boundary of the design box
L_PROBE1 = "probe1"
L_PROBE2 = "probe2"

_RIGID_OF = {AIR: RIGID, NDD_AIR: RIGID, DESIGN_AIR: DESIGN_RIGID,
             RIGID: RIGID, DESIGN_RIGID: DESIGN_RIGID}
_AIR_OF = {RIGID: AIR, DESIGN_RIGID: DESIGN_AIR, AIR: AIR,
           NDD_AIR: NDD_AIR, DESIGN_AIR: DESIGN_AIR}


def _sorted_pairs(pairs):
    p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return np.sort(p, axis=1)


class TriMesh:
    """Conforming triangle mesh with region tags and labeled edges.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    region : (nt,) int array of region tags
    labels : dict label -> (m, 2) int array of edge vertex pairs
    vertex_size : optional (nv,) target element size per vertex
    """

    def __init__(self, vertices, triangles, region, labels=None, vertex_size=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.region = np.ascontiguousarray(region, dtype=np.int8)
        self.labels = {k: _sorted_pairs(v) for k, v in (labels or {}).items()
                       if len(v) > 0}
        self.vertex_size = None if vertex_size is None else \
            np.ascontiguousarray(vertex_size, dtype=float)
        self._edges = None
        self._tri_edges = None

    # -- basic quantities -------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def areas(self):
        return np.abs(self.signed_areas())

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def air_mask(self):
        return np.isin(self.region, AIR_TAGS)

    # -- edge table --------------------------------------------------------

    def _build_edges(self):
        t = self.triangles
        raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw = np.sort(raw, axis=1)
        self._edges, inv = np.unique(raw, axis=0, return_inverse=True)
        self._tri_edges = inv.reshape(3, -1).T

    @property
    def edges(self):
        """Unique undirected edges, each row sorted (ne, 2)."""
        if self._edges is None:
            self._build_edges()
        return self._edges

    @property
    def tri_edges(self):
        """Edge index per local edge (v0v1, v1v2, v2v0) of each triangle."""
        if self._tri_edges is None:
            self._build_edges()
        return self._tri_edges

    def edge_lookup(self, pairs):
        """Map sorted vertex pairs to edge indices (-1 when absent)."""
        e = self.edges
        key = e[:, 0] * np.int64(self.num_vertices) + e[:, 1]
        p = _sorted_pairs(pairs)
        q = p[:, 0] * np.int64(self.num_vertices) + p[:, 1]
        idx = np.searchsorted(key, q)
        idx = np.clip(idx, 0, len(key) - 1)
        ok = key[idx] == q
        return np.where(ok, idx, -1)

    def edge_triangle_count(self):
        cnt = np.zeros(len(self.edges), dtype=np.int64)
        np.add.at(cnt, self.tri_edges.ravel(), 1)
        return cnt

    def boundary_edge_ids(self):
        return np.nonzero(self.edge_triangle_count() == 1)[0]

    def label_edge_ids(self, label):
        pairs = self.labels.get(label)
        if pairs is None or len(pairs) == 0:
            return np.empty(0, dtype=np.int64)
        ids = self.edge_lookup(pairs)
        if np.any(ids < 0):
            raise ValueError(f"label {label!r} references non-mesh edges")
        return ids

    def label_vertices(self, *names):
        """All vertex indices touched by the given edge labels."""
        out = []
        for name in names:
            pairs = self.labels.get(name)
            if pairs is not None and len(pairs):
                out.append(pairs.ravel())
        if not out:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(out))

    # -- validation --------------------------------------------------------

    def validate(self):
        """Assert orientation, conformity and label consistency."""
        if np.any(self.signed_areas() <= 0.0):
            raise AssertionError("non-positive triangle area")
        cnt = self.edge_triangle_count()
        if np.any(cnt > 2):
            raise AssertionError("edge shared by more than two triangles")
        # consistent orientation: each directed edge occurs at most once
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = directed[:, 0] * np.int64(self.num_vertices) + directed[:, 1]
        if len(np.unique(key)) != len(key):
            raise AssertionError("inconsistent triangle orientation")
        for name in self.labels:
            self.label_edge_ids(name)
        if not np.all(np.isin(self.region, AIR_TAGS + RIGID_TAGS)):
            raise AssertionError("unknown region tag")

    def edge_lengths(self, edge_ids=None):
        e = self.edges if edge_ids is None else self.edges[edge_ids]
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])


@dataclass(frozen=True)
class CaseGeometry:
    """Dimensions of the half-duct computational domains.

    kind: "closed" (reflecting right end), "open" (outlet at right end) or
    "benchmark" (closed tube with two pressure probe lines at
    ``probe_x1`` and ``probe_x1 + d_w`` used by the two-microphone
    absorption estimate).
    """

    kind: str = "closed"
    D_ex: float = 0.03
    L_NDD: float = 0.06
    L_D: float = 0.06
    t_w: float = 1.5e-3
    d_w: float = 0.01
    probe_x1: float = 0.02

    def __post_init__(self):
        if self.kind not in ("closed", "open", "benchmark"):
            raise ValueError(f"unknown case kind {self.kind!r}")
        for name in ("D_ex", "L_NDD", "L_D", "t_w"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive (degenerate geometry)")
        if self.t_w >= self.D_ex:
            raise ValueError("t_w must be smaller than D_ex")
        if 2.0 * self.t_w >= self.height:
            raise ValueError("non-design strips leave no design domain")
        if self.kind == "benchmark":
            if self.d_w <= 0.0 or self.probe_x1 <= 0.0:
                raise ValueError("benchmark probes need positive positions")
            if self.probe_x1 + self.d_w >= self.L_NDD:
                raise ValueError("probe lines must sit upstream of the design domain")

    @property
    def height(self):
        return self.D_ex / 2.0

    @property
    def length(self):
        return self.L_NDD + self.L_D

    @property
    def design_box(self):
        """(x0, y0, x1, y1) of the design domain D."""
        return (self.L_NDD, self.t_w, self.L_NDD + self.L_D,
                self.height - self.t_w)


def _graded_axis(keys, target):
    pts = [keys[0]]
    for a, b in zip(keys[:-1], keys[1:]):
        n = max(1, int(math.ceil((b - a) / target - 1e-9)))
        pts.extend(np.linspace(a, b, n + 1)[1:])
    return np.asarray(pts)


def build_case_geometry(case: CaseGeometry, target_size: float) -> TriMesh:
    """Triangulate the half-duct for a case at roughly uniform element size.

    Grid lines are forced through the design-box and probe coordinates so
    region tags and labels are exact.
    """
    if target_size <= 0.0:
        raise ValueError("target_size must be positive")
    key_x = [0.0, case.L_NDD, case.length]
    key_y = [0.0, case.t_w, case.height - case.t_w, case.height]
    if case.kind == "benchmark":
        key_x.extend([case.probe_x1, case.probe_x1 + case.d_w])
    key_x = sorted(set(key_x))
    key_y = sorted(set(key_y))
    xs = _graded_axis(key_x, target_size)
    ys = _graded_axis(key_y, target_size)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * ny + j

    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    tris = np.asarray(tris, dtype=np.int64)

    x0, y0, x1, y1 = case.design_box
    cen = vertices[tris].mean(axis=1)
    in_design = ((cen[:, 0] > x0) & (cen[:, 0] < x1)
                 & (cen[:, 1] > y0) & (cen[:, 1] < y1))
    region = np.where(in_design, DESIGN_AIR, NDD_AIR).astype(np.int8)

    mesh = TriMesh(vertices, tris, region)
    tol = 1e-9 * max(case.length, case.height)
    mids = 0.5 * (vertices[mesh.edges[:, 0]] + vertices[mesh.edges[:, 1]])
    bnd = mesh.boundary_edge_ids()
    bmid = mids[bnd]
    labels = {}

    def put(name, ids):
        if len(ids):
            labels[name] = mesh.edges[ids]

    put(L_IN, bnd[np.abs(bmid[:, 0]) < tol])
    right = bnd[np.abs(bmid[:, 0] - case.length) < tol]
    put(L_OUT if case.kind == "open" else L_REF, right)
    # the feeding duct (x < L_NDD) is an ideal waveguide: its exterior
    # wall is shear-free so the response does not depend on feed length
    bottom = bnd[np.abs(bmid[:, 1]) < tol]
    bx = mids[bottom, 0]
    put(L_WALL, bottom[bx >= case.L_NDD - tol])
    sym = bnd[np.abs(bmid[:, 1] - case.height) < tol]
    put(L_SYM, np.concatenate([sym, bottom[bx < case.L_NDD - tol]]))

    on_design = (
        ((np.abs(mids[:, 0] - x0) < tol) | (np.abs(mids[:, 0] - x1) < tol))
        & (mids[:, 1] > y0 - tol) & (mids[:, 1] < y1 + tol)
    ) | (
        ((np.abs(mids[:, 1] - y0) < tol) | (np.abs(mids[:, 1] - y1) < tol))
        & (mids[:, 0] > x0 - tol) & (mids[:, 0] < x1 + tol)
    )
    put(L_DESIGN, np.nonzero(on_design)[0])

    if case.kind == "benchmark":
        put(L_PROBE1, np.nonzero(np.abs(mids[:, 0] - case.probe_x1) < tol)[0])
        put(L_PROBE2,
            np.nonzero(np.abs(mids[:, 0] - case.probe_x1 - case.d_w) < tol)[0])

    out = TriMesh(vertices, tris, region, labels)
    if mesh.vertex_size is None:
        out.vertex_size = np.full(len(vertices), float(target_size))
    return out


# -- level-set conforming ---------------------------------------------------

def _fix_orientation(vertices, tri):
    p0, p1, p2 = vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]
    a = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
    if a < 0.0:
        return (tri[0], tri[2], tri[1])
    return tri


def conform_to_levelset(mesh: TriMesh, phi, snap=0.05,
                        preserve_rigid=False) -> TriMesh:
    """Split triangles along the zero isoline of the P1 field ``phi``.

    Triangles on the positive side become rigid-tagged, negative side
    air-tagged; the isoline polyline is labeled as the air/rigid interface.
    Crossings closer than ``snap`` (relative to edge length) to a vertex
    are snapped onto it, which also makes the operation idempotent.

    With ``preserve_rigid`` the already rigid-tagged triangles are left
    untouched (phi only carves additional rigid matter out of the air);
    the isoline must then stay clear of the existing rigid phase.
    """
    phi = np.asarray(phi, dtype=float)
    if len(phi) != mesh.num_vertices:
        raise ValueError("phi must be a vertex field of the mesh")
    tol = 1e-12
    sign = np.where(phi > tol, 1, -1).astype(np.int8)  # |phi|<=tol -> air

    edges = mesh.edges
    pa, pb = phi[edges[:, 0]], phi[edges[:, 1]]
    crossed = sign[edges[:, 0]] * sign[edges[:, 1]] < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(crossed, pa / (pa - pb), 0.5)
    snap_a = crossed & (t < snap)
    snap_b = crossed & (t > 1.0 - snap)
    sign[edges[snap_a, 0]] = 0
    sign[edges[snap_b, 1]] = 0
    crossed = (sign[edges[:, 0]] * sign[edges[:, 1]]) == -1

    rigid_tri = np.isin(mesh.region, RIGID_TAGS)
    if preserve_rigid and np.any(crossed[mesh.tri_edges[rigid_tri]]):
        raise ValueError(
            "preserve_rigid: the phi isoline crosses the rigid phase")

    nv = mesh.num_vertices
    cross_ids = np.nonzero(crossed)[0]
    new_vid = np.full(len(edges), -1, dtype=np.int64)
    new_vid[cross_ids] = nv + np.arange(len(cross_ids))
    a, b = edges[cross_ids, 0], edges[cross_ids, 1]
    tc = t[cross_ids][:, None]
    new_pts = (1.0 - tc) * mesh.vertices[a] + tc * mesh.vertices[b]
    vertices = np.vstack([mesh.vertices, new_pts]) if len(cross_ids) \
        else mesh.vertices.copy()

    tri_cross = crossed[mesh.tri_edges]
    mixed = tri_cross.any(axis=1)
    # vectorized pass for unsplit triangles
    keep_tris = mesh.triangles[~mixed]
    keep_sign = sign[keep_tris]
    keep_rigid = (keep_sign > 0).any(axis=1)
    keep_region = mesh.region[~mixed].copy()
    retag = np.ones(len(keep_region), dtype=bool)
    if preserve_rigid:
        retag = ~rigid_tri[~mixed]
    for tag in np.unique(keep_region):
        m = (keep_region == tag) & retag
        keep_region[m & keep_rigid] = _RIGID_OF[int(tag)]
        keep_region[m & ~keep_rigid] = _AIR_OF[int(tag)]

    new_tris, new_region, iface = [], [], []
    for ti in np.nonzero(mixed)[0]:
        v = mesh.triangles[ti]
        te = mesh.tri_edges[ti]
        s = sign[v]
        tag = int(mesh.region[ti])
        rigid_tag, air_tag = _RIGID_OF[tag], _AIR_OF[tag]
        pos = [k for k in range(3) if s[k] > 0]
        neg = [k for k in range(3) if s[k] < 0]

        def mid(i, j):
            # crossing vertex on the edge between local vertices i, j
            pair = tuple(sorted((v[i], v[j])))
            for le in range(3):
                e = edges[te[le]]
                if (e[0], e[1]) == pair:
                    return new_vid[te[le]]
            raise AssertionError("crossed edge not found")

        if len(pos) == 1 and len(neg) == 1:
            k0, k1 = pos[0], neg[0]
            kz = ({0, 1, 2} - {k0, k1}).pop()
            m = mid(k0, k1)
            new_tris.append(_fix_orientation(vertices, (v[kz], v[k0], m)))
            new_region.append(rigid_tag)
            new_tris.append(_fix_orientation(vertices, (v[kz], m, v[k1])))
            new_region.append(air_tag)
            iface.append((v[kz], m))
        elif len(pos) == 1:
            k = pos[0]
            n1, n2 = neg
            m1, m2 = mid(k, n1), mid(k, n2)
            new_tris.append(_fix_orientation(vertices, (v[k], m1, m2)))
            new_region.append(rigid_tag)
            new_tris.append(_fix_orientation(vertices, (m1, v[n1], v[n2])))
            new_region.append(air_tag)
            new_tris.append(_fix_orientation(vertices, (m1, v[n2], m2)))
            new_region.append(air_tag)
            iface.append((m1, m2))
        else:
            k = neg[0]
            p1, p2 = pos
            m1, m2 = mid(k, p1), mid(k, p2)
            new_tris.append(_fix_orientation(vertices, (v[k], m1, m2)))
            new_region.append(air_tag)
            new_tris.append(_fix_orientation(vertices, (m1, v[p1], v[p2])))
            new_region.append(rigid_tag)
            new_tris.append(_fix_orientation(vertices, (m1, v[p2], m2)))
            new_region.append(rigid_tag)
            iface.append((m1, m2))

    tris = np.vstack([keep_tris, np.asarray(new_tris, dtype=np.int64).reshape(-1, 3)])
    region = np.concatenate([keep_region,
                             np.asarray(new_region, dtype=np.int8)])

    # split any labeled edge that received a crossing vertex
    labels = {}
    for name, pairs in mesh.labels.items():
        if name == L_RIGID:
            continue
        ids = mesh.edge_lookup(pairs)
        out = []
        for (va, vb), eid in zip(pairs, ids):
            m = new_vid[eid] if eid >= 0 else -1
            if m >= 0:
                out.append((va, m))
                out.append((m, vb))
            else:
                out.append((va, vb))
        labels[name] = np.asarray(out, dtype=np.int64)

    out = TriMesh(vertices, tris, region, labels)

    # interface label: new segments plus old edges between snapped vertices
    # that separate an air and a rigid triangle
    iface = [seg for seg in iface]
    if preserve_rigid and L_RIGID in mesh.labels:
        iface.extend([tuple(e) for e in mesh.labels[L_RIGID]])
    zz = (sign[edges[:, 0]] == 0) & (sign[edges[:, 1]] == 0)
    if np.any(zz):
        adj_rigid = np.zeros(len(out.edges), dtype=bool)
        adj_air = np.zeros(len(out.edges), dtype=bool)
        rigid_tris = np.isin(out.region, RIGID_TAGS)
        te = out.tri_edges
        np.logical_or.at(adj_rigid, te[rigid_tris].ravel(), True)
        np.logical_or.at(adj_air, te[~rigid_tris].ravel(), True)
        cand = out.edge_lookup(edges[zz])
        cand = cand[cand >= 0]
        cand = cand[adj_rigid[cand] & adj_air[cand]]
        iface.extend([tuple(e) for e in out.edges[cand]])
    if iface:
        out.labels[L_RIGID] = np.unique(
            _sorted_pairs(np.asarray(iface, dtype=np.int64)), axis=0)

    if mesh.vertex_size is not None:
        sz = np.empty(len(vertices))
        sz[:nv] = mesh.vertex_size
        sz[nv:] = 0.5 * (mesh.vertex_size[a] + mesh.vertex_size[b])
        out.vertex_size = sz
    return out


# -- size-driven refinement ---------------------------------------------------

def refine_mesh(mesh: TriMesh, size=None, max_nodes=600_000,
                max_passes=40) -> TriMesh:
    """Refine by edge bisection until element diameters fit the size field.

    ``size`` defaults to ``mesh.vertex_size``. Elements whose longest edge
    exceeds 1.5x the smallest vertex size are refined; conformity is kept
    by longest-edge closure (1-, 2- and 3-edge split patterns).
    """
    if size is None:
        size = mesh.vertex_size
    if size is None:
        raise ValueError("no size field given")
    size = np.asarray(size, dtype=float)
    if np.any(size <= 0.0):
        raise ValueError("size field must be positive")
    cur = mesh
    cur_size = size
    for _ in range(max_passes):
        edges = cur.edges
        te = cur.tri_edges
        elen = cur.edge_lengths()
        tri_len = elen[te]
        longest = np.argmax(tri_len, axis=1)
        rows = np.arange(len(te))
        target = np.minimum.reduce([cur_size[cur.triangles[:, k]]
                                    for k in range(3)])
        viol = tri_len[rows, longest] > 1.5 * target
        if not viol.any():
            break
        if cur.num_vertices >= max_nodes:
            warnings.warn("refinement node budget exceeded; stopping early")
            break
        marked = np.zeros(len(edges), dtype=bool)
        marked[te[viol, longest[viol]]] = True
        while True:  # longest-edge closure
            tri_marked = marked[te]
            need = tri_marked.any(axis=1) & ~tri_marked[rows, longest]
            if not need.any():
                break
            marked[te[need, longest[need]]] = True

        nv = cur.num_vertices
        mids = np.nonzero(marked)[0]
        new_vid = np.full(len(edges), -1, dtype=np.int64)
        new_vid[mids] = nv + np.arange(len(mids))
        mpts = 0.5 * (cur.vertices[edges[mids, 0]] + cur.vertices[edges[mids, 1]])
        vertices = np.vstack([cur.vertices, mpts])
        msz = 0.5 * (cur_size[edges[mids, 0]] + cur_size[edges[mids, 1]])
        cur_size = np.concatenate([cur_size, msz])

        tri_marked = marked[te]
        nmark = tri_marked.sum(axis=1)
        # rotate so the longest (always marked where any are) sits first
        rot = longest
        v = cur.triangles
        va = v[rows, rot]
        vb = v[rows, (rot + 1) % 3]
        vc = v[rows, (rot + 2) % 3]
        e_ab = te[rows, rot]
        e_bc = te[rows, (rot + 1) % 3]
        e_ca = te[rows, (rot + 2) % 3]
        m_ab = new_vid[e_ab]
        m_bc = new_vid[e_bc]
        m_ca = new_vid[e_ca]

        tris_out = []
        reg_out = []

        def emit(mask, *tri_cols):
            if not mask.any():
                return
            for cols in tri_cols:
                tris_out.append(np.column_stack([c[mask] for c in cols]))
                reg_out.append(cur.region[mask])

        keep = nmark == 0
        if keep.any():
            tris_out.append(cur.triangles[keep])
            reg_out.append(cur.region[keep])
        c1 = (nmark == 1)
        emit(c1, (va, m_ab, vc), (m_ab, vb, vc))
        c2a = (nmark == 2) & marked[e_bc]
        emit(c2a, (va, m_ab, vc), (m_ab, vb, m_bc), (m_ab, m_bc, vc))
        c2b = (nmark == 2) & marked[e_ca]
        emit(c2b, (m_ab, vb, vc), (m_ab, vc, m_ca), (m_ab, m_ca, va))
        c3 = nmark == 3
        emit(c3, (va, m_ab, m_ca), (m_ab, vb, m_bc), (m_ca, m_bc, vc),
             (m_ab, m_bc, m_ca))

        labels = {}
        for name, pairs in cur.labels.items():
            ids = cur.edge_lookup(pairs)
            out = []
            for (x, y), eid in zip(pairs, ids):
                m = new_vid[eid] if eid >= 0 else -1
                if m >= 0:
                    out.append((x, m))
                    out.append((m, y))
                else:
                    out.append((x, y))
            labels[name] = np.asarray(out, dtype=np.int64)

        cur = TriMesh(vertices, np.vstack(tris_out),
                      np.concatenate(reg_out), labels)
    out = TriMesh(cur.vertices, cur.triangles, cur.region, cur.labels,
                  vertex_size=cur_size)
    return out


# -- point location and interpolation -----------------------------------------

class TriLocator:
    """Bin-grid point locator over a triangle mesh."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        v = mesh.vertices
        self.lo = v.min(axis=0)
        self.hi = v.max(axis=0)
        n = max(4, int(math.sqrt(mesh.num_triangles)))
        self.n = n
        span = np.maximum(self.hi - self.lo, 1e-300)
        self.inv = n / span
        self.bins = [[] for _ in range(n * n)]
        p = v[mesh.triangles]
        blo = np.clip(((p.min(axis=1) - self.lo) * self.inv).astype(int), 0, n - 1)
        bhi = np.clip(((p.max(axis=1) - self.lo) * self.inv).astype(int), 0, n - 1)
        for t in range(mesh.num_triangles):
            for i in range(blo[t, 0], bhi[t, 0] + 1):
                for j in range(blo[t, 1], bhi[t, 1] + 1):
                    self.bins[i * n + j].append(t)
        self._tri_pts = p

    def _bary(self, tri_idx, pt):
        p = self._tri_pts[tri_idx]
        d = p[1:] - p[0]
        det = d[0, 0] * d[1, 1] - d[1, 0] * d[0, 1]
        r = pt - p[0]
        l1 = (r[0] * d[1, 1] - r[1] * d[1, 0]) / det
        l2 = (d[0, 0] * r[1] - d[0, 1] * r[0]) / det
        return np.array([1.0 - l1 - l2, l1, l2])

    def locate(self, points, tol=1e-9):
        """Return (triangle index, barycentric coords) per query point.

        Points outside the mesh beyond ``tol`` are projected onto the
        closest candidate triangle with a warning.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        tri_out = np.empty(len(points), dtype=np.int64)
        bar_out = np.empty((len(points), 3))
        missed = 0
        for k, pt in enumerate(points):
            ij = np.clip(((pt - self.lo) * self.inv).astype(int), 0, n - 1)
            best, best_bar, best_def = -1, None, np.inf
            for ring in range(n + 1):
                cands = []
                for i in range(max(0, ij[0] - ring), min(n, ij[0] + ring + 1)):
                    for j in range(max(0, ij[1] - ring), min(n, ij[1] + ring + 1)):
                        if ring == 0 or i in (ij[0] - ring, ij[0] + ring) \
                                or j in (ij[1] - ring, ij[1] + ring):
                            cands.extend(self.bins[i * n + j])
                for t in cands:
                    bar = self._bary(t, pt)
                    deficit = -min(bar.min(), 0.0)
                    if deficit < best_def:
                        best, best_bar, best_def = t, bar, deficit
                if best_def <= tol:
                    break
                if ring >= 1 and best >= 0:
                    break
            if best_def > tol:
                missed += 1
                best_bar = np.clip(best_bar, 0.0, None)
                best_bar /= best_bar.sum()
            tri_out[k] = best
            bar_out[k] = best_bar
        if missed:
            warnings.warn(f"{missed} points outside mesh; projected to "
                          "nearest element")
        return tri_out, bar_out


def interpolate_field(src_mesh: TriMesh, values, dst_points, order=1,
                      locator=None):
    """Interpolate a P1 or P2 nodal field of ``src_mesh`` at points.

    ``dst_points`` may be an (n, 2) array or a TriMesh (its vertices are
    used). Shared nodes reproduce nodal values exactly; linear fields are
    reproduced exactly by both orders.
    """
    if isinstance(dst_points, TriMesh):
        dst_points = dst_points.vertices
    values = np.asarray(values)
    if locator is None:
        locator = TriLocator(src_mesh)
    tri, bar = locator.locate(dst_points)
    conn = src_mesh.triangles[tri]
    if order == 1:
        return np.einsum("nk,nk->n", bar, values[conn])
    if order == 2:
        nv = src_mesh.num_vertices
        l1, l2, l3 = bar[:, 0], bar[:, 1], bar[:, 2]
        edge_dofs = nv + src_mesh.tri_edges[tri]
        shp = np.column_stack([
            l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
            4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1,
        ])
        dofs = np.concatenate([conn, edge_dofs], axis=1)
        return np.einsum("nk,nk->n", shp, values[dofs])
    raise ValueError("order must be 1 or 2")


def extract_air_submesh(mesh: TriMesh):
    """Keep only air-tagged triangles; returns (submesh, vertex_map).

    ``vertex_map`` maps submesh vertex index -> parent vertex index.
    Labels are restricted to edges whose endpoints survive.
    """
    keep = mesh.air_mask()
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = np.full(mesh.num_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    labels = {}
    for name, pairs in mesh.labels.items():
        ok = (remap[pairs[:, 0]] >= 0) & (remap[pairs[:, 1]] >= 0)
        if ok.any():
            labels[name] = remap[pairs[ok]]
    sub = TriMesh(mesh.vertices[used], remap[tris], mesh.region[keep], labels,
                  vertex_size=None if mesh.vertex_size is None
                  else mesh.vertex_size[used])
    # drop label edges that are no longer mesh edges (other endpoint removed)
    for name in list(sub.labels):
        ids = sub.edge_lookup(sub.labels[name])
        sub.labels[name] = sub.labels[name][ids >= 0]
        if not len(sub.labels[name]):
            del sub.labels[name]
    return sub, used
