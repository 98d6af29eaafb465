"""Shared mesh builders for the test suite."""

import numpy as np

from viscopt.mesh import (AIR, RIGID, L_IN, L_OUT, L_REF, L_SYM, L_WALL,
                          TriMesh)


def _grid_mesh(key_x, key_y, size):
    """Structured triangulation with grid lines forced at the keys."""
    def axis(keys):
        pts = [keys[0]]
        for a, b in zip(keys[:-1], keys[1:]):
            n = max(1, int(np.ceil((b - a) / size - 1e-9)))
            pts.extend(np.linspace(a, b, n + 1)[1:])
        return np.asarray(pts)

    xs, ys = axis(sorted(set(key_x))), axis(sorted(set(key_y)))
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b = i * ny + j, (i + 1) * ny + j
            c, d = (i + 1) * ny + j + 1, i * ny + j + 1
            if (i + j) % 2 == 0:
                tris.extend([(a, b, c), (a, c, d)])
            else:
                tris.extend([(a, b, d), (b, c, d)])
    return vertices, np.asarray(tris, dtype=np.int64)


def straight_channel(width=1e-3, length=20e-3, size=1e-4) -> TriMesh:
    """Air-filled rectangular channel: walls on both long sides.

    The inlet is at x=0, the outlet at x=length; both are natural
    boundaries for the viscous/thermal fields.
    """
    vertices, tris = _grid_mesh([0.0, length], [0.0, width], size)
    region = np.zeros(len(tris), dtype=np.int8) + AIR
    mesh = TriMesh(vertices, tris, region)
    tol = 1e-12
    bnd = mesh.boundary_edge_ids()
    mids = 0.5 * (vertices[mesh.edges[:, 0]] + vertices[mesh.edges[:, 1]])
    labels = {}
    wall = bnd[(np.abs(mids[bnd, 1]) < tol)
               | (np.abs(mids[bnd, 1] - width) < tol)]
    labels[L_WALL] = mesh.edges[wall]
    labels[L_IN] = mesh.edges[bnd[np.abs(mids[bnd, 0]) < tol]]
    labels[L_OUT] = mesh.edges[bnd[np.abs(mids[bnd, 0] - length) < tol]]
    out = TriMesh(vertices, tris, region, labels)
    out.vertex_size = np.full(len(vertices), float(size))
    return out


def slit_resonator(size=2.5e-4, duct_len=0.01, height=0.01,
                   slit_len=3e-3, slit_w=0.5e-3, cavity=5e-3,
                   wall=2e-3) -> TriMesh:
    """Closed duct terminated by a slit-and-cavity resonator.

    A plane wave enters at x=0; the block at the right contains a
    cavity (``cavity`` square) fed through a slit of width ``slit_w``.
    Returns a body-fitted mesh (rigid phase tagged, not carved) so the
    sequential solver can run directly and the full model after
    ``extract_air_submesh``.
    """
    yc = height / 2.0
    x_slit0 = duct_len
    x_slit1 = duct_len + slit_len
    x_cav1 = x_slit1 + cavity
    length = x_cav1 + wall
    y_s0, y_s1 = yc - slit_w / 2.0, yc + slit_w / 2.0
    y_c0, y_c1 = yc - cavity / 2.0, yc + cavity / 2.0

    key_x = [0.0, x_slit0, x_slit1, x_cav1, length]
    key_y = [0.0, y_c0, y_s0, y_s1, y_c1, height]
    vertices, tris = _grid_mesh(key_x, key_y, size)
    cen = vertices[tris].mean(axis=1)

    in_slit = ((cen[:, 0] > x_slit0) & (cen[:, 0] < x_slit1)
               & (cen[:, 1] > y_s0) & (cen[:, 1] < y_s1))
    in_cav = ((cen[:, 0] > x_slit1) & (cen[:, 0] < x_cav1)
              & (cen[:, 1] > y_c0) & (cen[:, 1] < y_c1))
    in_duct = cen[:, 0] < x_slit0
    region = np.where(in_duct | in_slit | in_cav, AIR, RIGID).astype(np.int8)

    mesh = TriMesh(vertices, tris, region)
    tol = 1e-12
    bnd = mesh.boundary_edge_ids()
    mids = 0.5 * (vertices[mesh.edges[:, 0]] + vertices[mesh.edges[:, 1]])
    labels = {L_IN: mesh.edges[bnd[np.abs(mids[bnd, 0]) < tol]]}
    wall_ids = bnd[(np.abs(mids[bnd, 1]) < tol)
                   | (np.abs(mids[bnd, 1] - height) < tol)
                   | (np.abs(mids[bnd, 0] - length) < tol)]
    labels[L_WALL] = mesh.edges[wall_ids]
    # air/rigid interface: edges shared by one air and one rigid triangle
    air_tri = region == AIR
    adj_air = np.zeros(len(mesh.edges), dtype=bool)
    adj_rig = np.zeros(len(mesh.edges), dtype=bool)
    np.logical_or.at(adj_air, mesh.tri_edges[air_tri].ravel(), True)
    np.logical_or.at(adj_rig, mesh.tri_edges[~air_tri].ravel(), True)
    iface = np.nonzero(adj_air & adj_rig)[0]
    from viscopt.mesh import L_RIGID
    labels[L_RIGID] = mesh.edges[iface]
    out = TriMesh(vertices, tris, region, labels)
    out.vertex_size = np.full(len(vertices), float(size))
    return out


def refine_slit_resonator(freq_fin_hz=6000.0, size=4e-4, beta=1.2e-4,
                          fine=None, props=None):
    """Slit resonator with boundary-layer refinement applied."""
    from viscopt import distance
    from viscopt.physics import AirProperties, compute_wavenumbers

    props = props or AirProperties()
    wn = compute_wavenumbers(props, 2.0 * np.pi * freq_fin_hz)
    base = slit_resonator(size=size)
    dist = distance.solve_distance_field(base, distance.default_alpha_e(base))
    sized = distance.build_size_field(base, dist, beta, wn.lambda_v, size,
                                      fine=fine)
    from viscopt.mesh import refine_mesh
    return refine_mesh(sized)
