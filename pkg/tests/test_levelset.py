"""Tests for the level-set representation and the design update."""

import math

import numpy as np
import pytest

from viscopt.levelset import (LevelSetField, OptConfig, SensitivityState,
                              check_convergence, convergence_metric,
                              default_opt_config, design_tri_indices,
                              design_vertex_mask, filter_sensitivity,
                              init_levelset, phi_dirichlet_vertices,
                              run_optimization, update_levelset)
from viscopt.mesh import (DESIGN_AIR, DESIGN_RIGID, CaseGeometry,
                          build_case_geometry, conform_to_levelset)
from viscopt.physics import AirProperties, grid_from_hz


@pytest.fixture(scope="module")
def geom():
    return CaseGeometry(kind="closed")


@pytest.fixture(scope="module")
def background(geom):
    return build_case_geometry(geom, 2.5e-3)


class TestInit:
    def test_all_air(self, background):
        ls = init_levelset(background, "all-air")
        assert np.all(ls.phi == -1.0)
        assert np.all(ls.chi == 0.0)

    def test_all_rigid(self, background):
        ls = init_levelset(background, "all-rigid")
        design = design_vertex_mask(background)
        assert np.all(ls.phi[~design] == -1.0)
        assert np.all(ls.phi[design] >= 0.0)
        # the zero isoline sits exactly on the design-box boundary, so
        # conforming adds no vertices and nearly all design triangles
        # are rigid (corner elements with every vertex on the boundary
        # fall to the air side by the tie-break)
        carved = conform_to_levelset(background, ls.phi)
        assert carved.num_vertices == background.num_vertices
        n_rigid = np.sum(carved.region == DESIGN_RIGID)
        n_air = np.sum(carved.region == DESIGN_AIR)
        assert n_rigid > 0
        assert n_air <= 0.01 * (n_rigid + n_air)

    def test_two_channel(self, background, geom):
        ls = init_levelset(background, "two-channel", geom)
        design = design_vertex_mask(background)
        # both phases present inside the design box
        assert np.any(ls.phi[design] > 0.0)
        assert np.any(ls.phi[design] < 0.0)
        # air nodes concentrated near 1/3 and 2/3 of the box height
        x0, y0, x1, y1 = geom.design_box
        y = background.vertices[:, 1]
        air = design & (ls.phi < 0.0)
        d1 = np.abs(y[air] - (y0 + (y1 - y0) / 3.0))
        d2 = np.abs(y[air] - (y0 + 2.0 * (y1 - y0) / 3.0))
        assert np.all(np.minimum(d1, d2) < 2.0 * geom.t_w)

    def test_two_channel_requires_geom(self, background):
        with pytest.raises(ValueError):
            init_levelset(background, "two-channel")

    def test_custom_and_errors(self, background):
        nv = background.num_vertices
        ls = init_levelset(background, "custom", data=np.zeros(nv))
        assert np.all(ls.chi == 1.0)  # phi = 0 counts as rigid
        with pytest.raises(ValueError):
            init_levelset(background, "custom")
        with pytest.raises(ValueError):
            init_levelset(background, "checkerboard")

    def test_field_validation(self, background):
        nv = background.num_vertices
        with pytest.raises(ValueError):
            LevelSetField(background, np.zeros(nv - 1))
        with pytest.raises(ValueError):
            LevelSetField(background, np.full(nv, 2.0))


class TestConfig:
    def test_defaults_by_kind(self, geom):
        cb = default_opt_config("benchmark")
        assert cb.tau == 5e-4 and cb.alpha_t == 1.0
        cc = default_opt_config("closed", geom)
        assert cc.tau == 5e-5 and cc.alpha_t == 0.01
        assert cc.L_phi == geom.D_ex
        assert cc.gamma_phi_n == "ndd+right"
        co = default_opt_config("open")
        assert co.gamma_phi_n == "ndd"

    def test_overrides(self, geom):
        cfg = default_opt_config("closed", geom, alpha_t=0.5, max_iters=7)
        assert cfg.alpha_t == 0.5 and cfg.max_iters == 7

    def test_validation(self):
        with pytest.raises(ValueError):
            OptConfig(tau=0.0)
        with pytest.raises(ValueError):
            OptConfig(alpha_t=0.0)
        with pytest.raises(ValueError):
            OptConfig(alpha_t=1.5)
        with pytest.raises(ValueError):
            OptConfig(gamma_phi_n="everywhere")
        with pytest.raises(ValueError):
            OptConfig(threshold=-1.0)

    def test_dirichlet_vertices(self, background, geom):
        none = phi_dirichlet_vertices(background,
                                      OptConfig(gamma_phi_n="ndd+right"))
        assert len(none) == 0
        fixed = phi_dirichlet_vertices(background, OptConfig(gamma_phi_n="ndd"))
        assert len(fixed) > 0
        pts = background.vertices[fixed]
        # design vertices on the outer boundary: the right duct end
        assert np.allclose(pts[:, 0], geom.length)


class TestFilter:
    def test_first_call_copies(self, background):
        st = SensitivityState(background)
        jp = np.arange(background.num_vertices, dtype=float)
        out = filter_sensitivity(st, jp, alpha_t=0.01)
        assert np.array_equal(out, jp)

    def test_exponential_average(self, background):
        nv = background.num_vertices
        st = SensitivityState(background)
        filter_sensitivity(st, np.zeros(nv), 0.25)
        out = filter_sensitivity(st, np.ones(nv), 0.25)
        assert np.allclose(out, 0.25)
        out = filter_sensitivity(st, np.ones(nv), 0.25)
        assert np.allclose(out, 0.25 + 0.75 * 0.25)

    def test_length_check(self, background):
        st = SensitivityState(background)
        with pytest.raises(ValueError):
            filter_sensitivity(st, np.zeros(3), 0.5)


class TestUpdate:
    def cfg(self, **kw):
        return OptConfig(**{**dict(tau=5e-4, L_phi=0.05, k_dt=0.5,
                                   alpha_t=1.0), **kw})

    def test_negative_sensitivity_grows_rigid(self, background):
        ls = init_levelset(background, "all-air")
        design = design_vertex_mask(background)
        jbar = np.where(design, -1.0, 0.0)
        out = update_levelset(ls, jbar, self.cfg())
        assert np.all(out.phi >= -1.0) and np.all(out.phi <= 1.0)
        assert np.any(out.phi[design] > -1.0)
        # non-design nodes never move
        assert np.all(out.phi[~design] == -1.0)

    def test_positive_sensitivity_keeps_air(self, background):
        ls = init_levelset(background, "all-air")
        jbar = np.where(design_vertex_mask(background), 1.0, 0.0)
        out = update_levelset(ls, jbar, self.cfg())
        assert np.all(out.phi == -1.0)  # clamped at the lower bound

    def test_zero_sensitivity_warns(self, background):
        ls = init_levelset(background, "all-rigid")
        with pytest.warns(UserWarning, match="zero sensitivity"):
            out = update_levelset(ls, np.zeros(background.num_vertices),
                                  self.cfg())
        # pure diffusion smooths phi but keeps it in range
        assert np.all(np.abs(out.phi) <= 1.0)

    def test_dirichlet_nodes_held(self, background):
        ls = init_levelset(background, "all-rigid")
        cfg = self.cfg(gamma_phi_n="ndd")
        fixed = phi_dirichlet_vertices(background, cfg)
        jbar = np.where(design_vertex_mask(background), -1.0, 0.0)
        out = update_levelset(ls, jbar, cfg, dirichlet=fixed)
        assert np.all(out.phi[fixed] == -1.0)

    def test_length_check(self, background):
        ls = init_levelset(background, "all-air")
        with pytest.raises(ValueError):
            update_levelset(ls, np.zeros(3), self.cfg())


class TestConvergence:
    def test_nan_until_window_filled(self):
        assert math.isnan(convergence_metric([1.0] * 10, window=10))
        assert not check_convergence([1.0] * 10, window=10)

    def test_metric_value(self):
        j = [-1.0] * 10 + [-1.0, -1.01]
        m = convergence_metric(j, window=10)
        # nine zero changes and one 1% change
        assert m == pytest.approx(0.01 / 10.0 / 1.0, rel=1e-6)
        assert check_convergence(j, window=10, threshold=5e-3)

    def test_large_changes_not_converged(self):
        j = list(np.linspace(-0.1, -0.9, 15))
        assert not check_convergence(j, window=10, threshold=5e-3)


def test_run_optimization_smoke(geom):
    """Two iterations on a very coarse benchmark mesh: record plumbing."""
    bgeom = CaseGeometry(kind="benchmark")
    props = AirProperties()
    grid = grid_from_hz(2000.0, 2000.0, 0)
    cfg = default_opt_config("benchmark", bgeom, max_iters=2)
    seen = []
    res = run_optimization(bgeom, props, grid, cfg, preset="two-channel",
                           coarse=3e-3, beta_e=6e-5, fine_size=4e-4,
                           grading=1.0,
                           callback=lambda it, st: seen.append((it, st)))
    assert len(res.history) == 2
    assert not res.converged
    assert [r.iteration for r in res.history] == [0, 1]
    assert all(np.isfinite(r.J) for r in res.history)
    assert math.isnan(res.history[0].conv_metric)
    assert len(seen) == 2
    st = seen[0][1]
    assert set(st) >= {"levelset", "mesh", "record", "report", "jbar"}
    assert len(res.levelset.phi) == st["levelset"].mesh.num_vertices
    assert res.report is not None
    assert res.mesh.num_vertices >= st["levelset"].mesh.num_vertices
