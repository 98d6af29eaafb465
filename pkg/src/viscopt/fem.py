"""P1/P2 scalar finite elements on triangles with complex assembly.

Volume terms use a 6-point degree-4 rule; edge terms a 3-point Gauss
rule, so P2 x P2 mass matrices are integrated exactly on straight
elements.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import TriMesh

# 6-point degree-4 triangle rule (barycentric coordinates, weights sum 1/2)
_a = 0.445948490915965
_b = 0.091576213509771
TRI_QP = np.array([
    [1 - 2 * _a, _a, _a], [_a, 1 - 2 * _a, _a], [_a, _a, 1 - 2 * _a],
    [1 - 2 * _b, _b, _b], [_b, 1 - 2 * _b, _b], [_b, _b, 1 - 2 * _b],
])
TRI_QW = 0.5 * np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)

# 3-point Gauss on [0, 1]
_g = 0.5 * np.sqrt(0.6)
EDGE_QP = np.array([0.5 - _g, 0.5, 0.5 + _g])
EDGE_QW = np.array([5.0, 8.0, 5.0]) / 18.0


def _p1_shapes(bary):
    return np.asarray(bary, dtype=float)


def _p2_shapes(bary):
    l1, l2, l3 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack([
        l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
        4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1,
    ])


def _p1_ref_grads(bary):
    g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return np.broadcast_to(g, (len(bary), 3, 2))


def _p2_ref_grads(bary):
    l1, l2, l3 = bary[:, 0], bary[:, 1], bary[:, 2]
    d1 = np.array([-1.0, -1.0])
    d2 = np.array([1.0, 0.0])
    d3 = np.array([0.0, 1.0])
    nq = len(bary)
    g = np.empty((nq, 6, 2))
    g[:, 0] = (4 * l1 - 1)[:, None] * d1
    g[:, 1] = (4 * l2 - 1)[:, None] * d2
    g[:, 2] = (4 * l3 - 1)[:, None] * d3
    g[:, 3] = 4 * (l2[:, None] * d1 + l1[:, None] * d2)
    g[:, 4] = 4 * (l3[:, None] * d2 + l2[:, None] * d3)
    g[:, 5] = 4 * (l1[:, None] * d3 + l3[:, None] * d1)
    return g


class P1Space:
    order = 1

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.ndof = mesh.num_vertices
        self.cells = mesh.triangles
        self.shapes = _p1_shapes(TRI_QP)
        self.ref_grads = np.asarray(_p1_ref_grads(TRI_QP))

    def dof_coords(self):
        return self.mesh.vertices

    def edge_dofs(self, edge_ids):
        return self.mesh.edges[edge_ids]

    def edge_shapes(self, s=EDGE_QP):
        return np.column_stack([1.0 - s, s])


class P2Space:
    order = 2

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        nv = mesh.num_vertices
        self.ndof = nv + len(mesh.edges)
        self.cells = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        self.shapes = _p2_shapes(TRI_QP)
        self.ref_grads = _p2_ref_grads(TRI_QP)

    def dof_coords(self):
        m = self.mesh
        mids = 0.5 * (m.vertices[m.edges[:, 0]] + m.vertices[m.edges[:, 1]])
        return np.vstack([m.vertices, mids])

    def edge_dofs(self, edge_ids):
        e = self.mesh.edges[edge_ids]
        return np.column_stack([e, self.mesh.num_vertices + edge_ids])

    def edge_shapes(self, s=EDGE_QP):
        return np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1),
                                4 * s * (1 - s)])


def make_space(mesh, order):
    if order == 1:
        return P1Space(mesh)
    if order == 2:
        return P2Space(mesh)
    raise ValueError("order must be 1 or 2")


def tri_geometry(mesh: TriMesh, tri_idx=None):
    """Jacobian determinants and inverse-transpose per triangle."""
    t = mesh.triangles if tri_idx is None else mesh.triangles[tri_idx]
    p = mesh.vertices[t]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # dx/dref
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 1, 0]
    inv[:, 1, 0] = -J[:, 0, 1]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    # inv is J^{-T}; physical gradient = inv @ reference gradient
    return det, inv


def quad_points(mesh: TriMesh, tri_idx=None):
    """Physical coordinates of the volume quadrature points (nt, nq, 2)."""
    t = mesh.triangles if tri_idx is None else mesh.triangles[tri_idx]
    p = mesh.vertices[t]
    return np.einsum("qk,tkd->tqd", TRI_QP, p)


def field_at_qp(space, values, tri_idx=None):
    """Nodal field evaluated at the volume quadrature points (nt, nq)."""
    cells = space.cells if tri_idx is None else space.cells[tri_idx]
    return np.einsum("qk,tk->tq", space.shapes, np.asarray(values)[cells])


def gradient_at_qp(space, values, tri_idx=None):
    """Gradient of a nodal field at the quadrature points (nt, nq, 2)."""
    det, inv = tri_geometry(space.mesh, tri_idx)
    cells = space.cells if tri_idx is None else space.cells[tri_idx]
    g = np.einsum("tde,qke->tqkd", inv, space.ref_grads)
    return np.einsum("tqkd,tk->tqd", g, np.asarray(values)[cells])


def _coef_qp(coef, nt, nq):
    if coef is None:
        return None
    c = np.asarray(coef)
    if c.ndim == 0:
        if c == 0:
            return None
        return np.broadcast_to(c, (nt, nq))
    if c.ndim == 1:
        return np.broadcast_to(c[:, None], (nt, nq))
    return c


def assemble_matrix(space, stiff=None, mass=None, tri_idx=None):
    """Assemble ``stiff * grad u . grad v + mass * u v`` over triangles.

    Coefficients may be scalars, per-triangle arrays or per-quadrature
    (nt, nq) arrays; complex allowed. Returns CSR.
    """
    mesh = space.mesh
    cells = space.cells if tri_idx is None else space.cells[tri_idx]
    nt, nloc = cells.shape
    det, inv = tri_geometry(mesh, tri_idx)
    w = TRI_QW[None, :] * np.abs(det)[:, None]  # (nt, nq)
    cs = _coef_qp(stiff, nt, len(TRI_QW))
    cm = _coef_qp(mass, nt, len(TRI_QW))
    loc = 0.0
    if cs is not None:
        g = np.einsum("tde,qke->tqkd", inv, space.ref_grads)
        loc = loc + np.einsum("tq,tqkd,tqld->tkl", w * cs, g, g)
    if cm is not None:
        n = space.shapes
        loc = loc + np.einsum("tq,qk,ql->tkl", w * cm, n, n)
    if np.isscalar(loc):
        loc = np.zeros((nt, nloc, nloc))
    rows = np.repeat(cells, nloc, axis=1).ravel()
    cols = np.tile(cells, (1, nloc)).ravel()
    A = sp.coo_matrix((loc.ravel(), (rows, cols)),
                      shape=(space.ndof, space.ndof))
    return A.tocsr()


def assemble_load(space, coef, tri_idx=None):
    """Assemble ``integral coef * v`` over triangles into a vector."""
    mesh = space.mesh
    cells = space.cells if tri_idx is None else space.cells[tri_idx]
    nt = len(cells)
    det, _ = tri_geometry(mesh, tri_idx)
    w = TRI_QW[None, :] * np.abs(det)[:, None]
    c = _coef_qp(coef, nt, len(TRI_QW))
    out = np.zeros(space.ndof, dtype=complex if c is None or
                   np.iscomplexobj(c) else float)
    if c is None:
        return out
    loc = np.einsum("tq,qk->tk", w * c, space.shapes)
    np.add.at(out, cells.ravel(), loc.ravel())
    return out


def edge_quad(mesh: TriMesh, edge_ids):
    """Physical quadrature points and scaled weights on edges.

    Returns (points (m, nq, 2), weights (m, nq) including edge length).
    """
    e = mesh.edges[edge_ids]
    a, b = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    pts = a[:, None, :] + EDGE_QP[None, :, None] * (b - a)[:, None, :]
    length = np.hypot(*(b - a).T)
    return pts, EDGE_QW[None, :] * length[:, None]


def boundary_mass(space, edge_ids, coef=1.0):
    """Assemble ``integral_edges coef * u v`` along labeled edges."""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    if len(edge_ids) == 0:
        return sp.csr_matrix((space.ndof, space.ndof))
    dofs = space.edge_dofs(edge_ids)
    _, w = edge_quad(space.mesh, edge_ids)
    c = _coef_qp(coef, len(edge_ids), len(EDGE_QP))
    n = space.edge_shapes()
    loc = np.einsum("mq,qk,ql->mkl", w * c, n, n)
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    return sp.coo_matrix((loc.ravel(), (rows, cols)),
                         shape=(space.ndof, space.ndof)).tocsr()


def boundary_load(space, edge_ids, values):
    """Assemble ``integral_edges f * v``; ``values`` given at edge quad points.

    ``values`` may be a scalar, an (m,) per-edge array, an (m, nq) array,
    or a callable of the (m, nq, 2) quadrature coordinates.
    """
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    out = np.zeros(space.ndof, dtype=complex)
    if len(edge_ids) == 0:
        return out
    dofs = space.edge_dofs(edge_ids)
    pts, w = edge_quad(space.mesh, edge_ids)
    if callable(values):
        values = values(pts)
    c = _coef_qp(values, len(edge_ids), len(EDGE_QP))
    loc = np.einsum("mq,qk->mk", w * c, space.edge_shapes())
    np.add.at(out, dofs.ravel(), loc.ravel())
    return out


def edge_field_at_qp(space, values, edge_ids):
    """Nodal field evaluated at the edge quadrature points (m, nq)."""
    dofs = space.edge_dofs(np.asarray(edge_ids, dtype=np.int64))
    return np.einsum("qk,mk->mq", space.edge_shapes(),
                     np.asarray(values)[dofs])


def integrate_edges(mesh, edge_ids, qp_values):
    """Integrate quadrature-point values over a set of edges."""
    _, w = edge_quad(mesh, edge_ids)
    return np.sum(w * qp_values)


def integrate(space, qp_values, tri_idx=None):
    """Integrate (nt, nq) quadrature-point values over triangles."""
    det, _ = tri_geometry(space.mesh, tri_idx)
    w = TRI_QW[None, :] * np.abs(det)[:, None]
    return np.sum(w * qp_values)


def p1_project(mesh: TriMesh, qp_values, tri_idx=None):
    """Lumped L2 projection of quadrature-point data onto P1 nodes."""
    space = P1Space(mesh)
    rhs = assemble_load(space, qp_values, tri_idx)
    lump = assemble_load(space, 1.0 + 0j, tri_idx).real
    out = np.zeros(space.ndof, dtype=rhs.dtype)
    ok = lump > 0
    out[ok] = rhs[ok] / lump[ok]
    return out


def point_eval(space, values, points, locator=None, grad=False):
    """Evaluate a nodal field (and optionally its gradient) at points."""
    from .mesh import TriLocator
    if locator is None:
        locator = TriLocator(space.mesh)
    tri, bar = locator.locate(np.atleast_2d(points))
    if space.order == 2:
        shp = _p2_shapes(bar)
        rg = _p2_ref_grads(bar)
    else:
        shp = _p1_shapes(bar)
        rg = np.asarray(_p1_ref_grads(bar))
    vals = np.asarray(values)[space.cells[tri]]
    out = np.einsum("nk,nk->n", shp, vals)
    if not grad:
        return out
    det, inv = tri_geometry(space.mesh, tri)
    g = np.einsum("nde,nke->nkd", inv, rg)
    grads = np.einsum("nkd,nk->nd", g, vals)
    return out, grads


class DirichletSystem:
    """A x = b with fixed dofs eliminated; the LU factor is reusable."""

    def __init__(self, A, fixed_dofs, ndof=None):
        ndof = A.shape[0] if ndof is None else ndof
        self.ndof = ndof
        fixed = np.zeros(ndof, dtype=bool)
        if len(np.atleast_1d(fixed_dofs)):
            fixed[np.asarray(fixed_dofs, dtype=np.int64)] = True
        self.fixed = fixed
        self.free = np.nonzero(~fixed)[0]
        A = A.tocsr().astype(complex)
        self._A_ff = A[self.free][:, self.free].tocsc()
        self._A_fd = A[self.free][:, np.nonzero(fixed)[0]].tocsr()
        try:
            self._lu = spla.splu(self._A_ff)
        except RuntimeError as exc:
            raise RuntimeError(
                f"sparse factorization failed: {exc} "
                f"(n={self._A_ff.shape[0]}, nnz={self._A_ff.nnz})") from exc

    def solve(self, b, dirichlet_values=None):
        x = np.zeros(self.ndof, dtype=complex)
        if dirichlet_values is not None:
            x[self.fixed] = np.asarray(dirichlet_values, dtype=complex)[
                self.fixed] if np.ndim(dirichlet_values) else dirichlet_values
        rhs = np.asarray(b, dtype=complex)[self.free]
        if self._A_fd.nnz and np.any(x[self.fixed] != 0):
            rhs = rhs - self._A_fd @ x[self.fixed]
        x[self.free] = self._lu.solve(rhs)
        return x


def solve_direct(A, b):
    """One-shot complex sparse direct solve with diagnostics on failure."""
    try:
        lu = spla.splu(A.tocsc().astype(complex))
    except RuntimeError as exc:
        raise RuntimeError(
            f"sparse factorization failed: {exc} "
            f"(n={A.shape[0]}, nnz={A.nnz})") from exc
    return lu.solve(np.asarray(b, dtype=complex))
