"""Tests for the P1/P2 finite element kernels."""

import numpy as np
import pytest

from viscopt import fem
from viscopt.fem import (DirichletSystem, P1Space, P2Space, assemble_load,
                         assemble_matrix, boundary_load, boundary_mass,
                         edge_field_at_qp, field_at_qp, gradient_at_qp,
                         integrate, integrate_edges, make_space, p1_project,
                         point_eval, quad_points, solve_direct)

from test_mesh import unit_square


@pytest.fixture(scope="module")
def mesh():
    return unit_square(6)


@pytest.fixture(scope="module", params=[1, 2])
def space(request, mesh):
    return make_space(mesh, request.param)


def nodal(space, f):
    xy = space.dof_coords()
    return f(xy[:, 0], xy[:, 1])


def test_quadrature_weights():
    assert fem.TRI_QW.sum() == pytest.approx(0.5)
    assert fem.EDGE_QW.sum() == pytest.approx(1.0)


def test_mass_matrix_integrates_polynomials(space):
    # u v with u = v = 1 integrates the area; with quadratics it is exact
    M = assemble_matrix(space, mass=1.0)
    one = np.ones(space.ndof)
    assert one @ (M @ one) == pytest.approx(1.0)
    u = nodal(space, lambda x, y: x if space.order == 1 else x * y)
    v = nodal(space, lambda x, y: y if space.order == 1 else x + y)
    # int x*y = 1/4; int x*y*(x+y) = 1/3 (P2 interpolates both factors exactly)
    exact = 0.25 if space.order == 1 else 1.0 / 3.0
    assert u @ (M @ v) == pytest.approx(exact, rel=1e-12)


def test_stiffness_matrix_on_linear_field(space):
    K = assemble_matrix(space, stiff=1.0)
    u = nodal(space, lambda x, y: 3.0 * x - 2.0 * y)
    # grad u constant: integral |grad u|^2 = 13 * area
    assert u @ (K @ u) == pytest.approx(13.0, rel=1e-12)
    # constants are in the kernel
    assert np.allclose(K @ np.ones(space.ndof), 0.0, atol=1e-12)


def test_assemble_with_per_triangle_coefficient(mesh):
    space = P1Space(mesh)
    cen = mesh.centroids()
    left = cen[:, 0] < 0.5
    M = assemble_matrix(space, mass=np.where(left, 2.0, 0.0))
    one = np.ones(space.ndof)
    assert one @ (M @ one) == pytest.approx(1.0)  # 2 * area(left half)


def test_assemble_complex_and_subset(mesh):
    space = P1Space(mesh)
    idx = np.nonzero(mesh.centroids()[:, 0] < 0.5)[0]
    M = assemble_matrix(space, mass=1.0 + 2.0j, tri_idx=idx)
    one = np.ones(space.ndof)
    assert one @ (M @ one) == pytest.approx(0.5 + 1.0j)


def test_load_vector(space):
    b = assemble_load(space, 1.0)
    assert b.sum() == pytest.approx(1.0)
    u = nodal(space, lambda x, y: x)
    assert u @ assemble_load(space, 1.0) == pytest.approx(0.5, rel=1e-12)


def test_field_and_gradient_at_qp(space):
    u = nodal(space, lambda x, y: 1.0 + 2.0 * x - y)
    qp = quad_points(space.mesh)
    f = field_at_qp(space, u)
    assert np.allclose(f, 1.0 + 2.0 * qp[..., 0] - qp[..., 1])
    g = gradient_at_qp(space, u)
    assert np.allclose(g[..., 0], 2.0)
    assert np.allclose(g[..., 1], -1.0)


def test_p2_quadratic_exact(mesh):
    space = P2Space(mesh)
    u = nodal(space, lambda x, y: x * x + y)
    qp = quad_points(mesh)
    f = field_at_qp(space, u)
    assert np.allclose(f, qp[..., 0] ** 2 + qp[..., 1])
    g = gradient_at_qp(space, u)
    assert np.allclose(g[..., 0], 2.0 * qp[..., 0])
    assert np.allclose(g[..., 1], 1.0)


def test_integrate(space):
    qp = quad_points(space.mesh)
    val = integrate(space, qp[..., 0] * qp[..., 1])
    assert val == pytest.approx(0.25, rel=1e-12)


def bottom_edges(mesh):
    bnd = mesh.boundary_edge_ids()
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0], 1]
                  + mesh.vertices[mesh.edges[:, 1], 1])
    return bnd[np.abs(mids[bnd]) < 1e-12]


def test_boundary_mass_and_load(space):
    eids = bottom_edges(space.mesh)
    B = boundary_mass(space, eids)
    one = np.ones(space.ndof)
    assert one @ (B @ one) == pytest.approx(1.0)  # bottom edge length
    u = nodal(space, lambda x, y: x)
    assert u @ (B @ u) == pytest.approx(1.0 / 3.0, rel=1e-12)
    b = boundary_load(space, eids, lambda pts: pts[..., 0])
    assert u @ b == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert one @ b == pytest.approx(0.5, rel=1e-12)


def test_edge_field_and_integrate_edges(space):
    eids = bottom_edges(space.mesh)
    u = nodal(space, lambda x, y: x * x)
    f = edge_field_at_qp(space, u, eids)
    val = integrate_edges(space.mesh, eids, f)
    # P1 interpolation of x^2 overshoots by h^2/6 per unit length
    h = 1.0 / 6.0
    exact = 1.0 / 3.0 if space.order == 2 else 1.0 / 3.0 + h ** 2 / 6.0
    assert val == pytest.approx(exact, rel=1e-12)


def test_empty_edge_set(space):
    eids = np.empty(0, dtype=np.int64)
    assert boundary_mass(space, eids).nnz == 0
    assert np.all(boundary_load(space, eids, 1.0) == 0.0)


def test_p1_project_reproduces_linear(mesh):
    qp = quad_points(mesh)
    vals = 2.0 * qp[..., 0] + 1.0
    out = p1_project(mesh, vals)
    # lumped projection carries an O(h) bias near boundaries
    assert np.allclose(out, 2.0 * mesh.vertices[:, 0] + 1.0, atol=0.15)
    # integral preserved by lumped projection of a constant
    assert np.allclose(p1_project(mesh, np.ones_like(vals)), 1.0)


def test_point_eval_values_and_gradient(mesh):
    space = P2Space(mesh)
    u = nodal(space, lambda x, y: x * y)
    pts = np.array([[0.3, 0.7], [0.11, 0.52]])
    vals, grads = point_eval(space, u, pts, grad=True)
    assert np.allclose(vals, pts[:, 0] * pts[:, 1])
    assert np.allclose(grads, pts[:, ::-1])


def test_dirichlet_system_poisson(mesh):
    # -Laplace u = 0, u = x on the boundary -> u = x everywhere
    space = P1Space(mesh)
    K = assemble_matrix(space, stiff=1.0)
    bnd_v = np.unique(mesh.edges[mesh.boundary_edge_ids()])
    sys = DirichletSystem(K, bnd_v)
    g = np.zeros(space.ndof, dtype=complex)
    g[bnd_v] = mesh.vertices[bnd_v, 0]
    x = sys.solve(np.zeros(space.ndof), g)
    assert np.allclose(x.real, mesh.vertices[:, 0], atol=1e-10)
    assert np.allclose(x.imag, 0.0, atol=1e-12)


def test_dirichlet_system_reuses_factorization(mesh):
    space = P1Space(mesh)
    A = assemble_matrix(space, stiff=1.0, mass=1.0)
    bnd_v = np.unique(mesh.edges[mesh.boundary_edge_ids()])
    sys = DirichletSystem(A, bnd_v)
    for rhs_val in (1.0, 2.0 + 1.0j):
        b = assemble_load(space, rhs_val)
        x = sys.solve(b)
        assert np.allclose(x[bnd_v], 0.0)
        r = A @ x - b
        free = np.setdiff1d(np.arange(space.ndof), bnd_v)
        assert np.max(np.abs(r[free])) < 1e-12


def test_solve_direct_matches_dense(mesh):
    space = P1Space(mesh)
    A = assemble_matrix(space, stiff=1.0, mass=1.0 + 0.5j)
    b = assemble_load(space, 1.0)
    x = solve_direct(A, b)
    assert np.max(np.abs(A @ x - b)) < 1e-12
