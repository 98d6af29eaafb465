"""Level-set design representation and the optimization loop.

The design is a P1 nodal level-set function phi on a fixed background
mesh: phi > 0 marks the rigid phase, phi < 0 the air phase inside the
design box. Sensitivities are exponentially averaged in fictitious time
and phi is advanced by a semi-implicit reaction-diffusion step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import distance, fem
from .adjoint import (build_adjoint_load, design_sensitivity,
                      solve_adjoint_pressure, topological_derivative)
from .mesh import (DESIGN_AIR, DESIGN_RIGID, CaseGeometry, TriMesh,
                   build_case_geometry, conform_to_levelset, refine_mesh)
from .physics import (AirProperties, FictitiousRigid, FrequencyGrid,
                      compute_wavenumbers)
from .slns import ObjectiveReport, map_frequencies, solve_forward

DESIGN_TAGS = (DESIGN_AIR, DESIGN_RIGID)


def design_tri_indices(mesh: TriMesh):
    return np.nonzero(np.isin(mesh.region, DESIGN_TAGS))[0]


def design_vertex_mask(mesh: TriMesh):
    m = np.zeros(mesh.num_vertices, dtype=bool)
    m[mesh.triangles[np.isin(mesh.region, DESIGN_TAGS)].ravel()] = True
    return m


def _interface_vertex_mask(mesh: TriMesh):
    """Design vertices shared with non-design triangles."""
    nd = np.zeros(mesh.num_vertices, dtype=bool)
    nd[mesh.triangles[~np.isin(mesh.region, DESIGN_TAGS)].ravel()] = True
    return design_vertex_mask(mesh) & nd


@dataclass
class LevelSetField:
    """P1 nodal level-set values on the background mesh."""

    mesh: TriMesh
    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if len(self.phi) != self.mesh.num_vertices:
            raise ValueError("phi must be a vertex field of the mesh")
        if np.any(self.phi < -1.0) or np.any(self.phi > 1.0):
            raise ValueError("phi values must lie in [-1, 1]")

    @property
    def chi(self):
        """Characteristic function of the rigid phase (1 where phi >= 0)."""
        return (self.phi >= 0.0).astype(float)


def init_levelset(background: TriMesh, preset: str = "all-air",
                  geom: Optional[CaseGeometry] = None,
                  data=None) -> LevelSetField:
    """Initial design: "all-air", "all-rigid", "two-channel" or "custom".

    "all-rigid" fills the design box with rigid matter, holding phi = 0
    on the interface nodes shared with the surrounding air so the zero
    isoline sits exactly on the box boundary. "two-channel" additionally
    carves two horizontal air channels of width t_w at 1/3 and 2/3 of
    the box height (requires ``geom``).
    """
    nv = background.num_vertices
    if preset == "custom":
        if data is None:
            raise ValueError("custom preset requires nodal phi data")
        return LevelSetField(background, np.asarray(data, dtype=float))
    phi = np.full(nv, -1.0)
    if preset == "all-air":
        return LevelSetField(background, phi)
    if preset not in ("all-rigid", "two-channel"):
        raise ValueError(f"unknown preset {preset!r}")
    design = design_vertex_mask(background)
    iface = _interface_vertex_mask(background)
    phi[design] = 1.0
    phi[iface] = 0.0
    if preset == "two-channel":
        if geom is None:
            raise ValueError("two-channel preset requires the case geometry")
        x0, y0, x1, y1 = geom.design_box
        hw = 0.5 * geom.t_w
        y = background.vertices[:, 1]
        strip = np.full(nv, np.inf)
        for frac in (1.0 / 3.0, 2.0 / 3.0):
            yc = y0 + frac * (y1 - y0)
            strip = np.minimum(strip, (np.abs(y - yc) - hw) / hw)
            # guarantee a node row inside the channel at coarse grids
            yd = y[design]
            row = yd[np.argmin(np.abs(yd - yc))]
            strip[np.abs(y - row) < 1e-12] = -1.0
        phi[design] = np.minimum(phi[design],
                                 np.clip(strip[design], -1.0, 1.0))
    return LevelSetField(background, phi)


@dataclass
class OptConfig:
    """Parameters of the reaction-diffusion design update.

    k_dt is the combined step K_phi * dt_s (only the product enters the
    semi-implicit update); gamma_phi_n selects where the level set gets
    a natural boundary condition: "ndd" only on the interface to the
    surrounding air, "ndd+right" also on the right end of the duct
    (elsewhere on the design-box boundary phi is held at -1).
    """

    tau: float = 5e-5
    L_phi: float = 0.03
    k_dt: float = 0.5
    alpha_t: float = 0.01
    gamma_phi_n: str = "ndd+right"
    window: int = 10
    threshold: float = 5e-3
    max_iters: int = 400

    def __post_init__(self):
        if self.tau <= 0.0 or self.L_phi <= 0.0 or self.k_dt <= 0.0:
            raise ValueError("tau, L_phi and k_dt must be positive")
        if not 0.0 < self.alpha_t <= 1.0:
            raise ValueError("alpha_t must be in (0, 1]")
        if self.gamma_phi_n not in ("ndd", "ndd+right"):
            raise ValueError(f"unknown gamma_phi_n {self.gamma_phi_n!r}")
        if self.window < 1 or self.threshold <= 0.0 or self.max_iters < 1:
            raise ValueError("invalid convergence settings")


def default_opt_config(kind: str, geom: Optional[CaseGeometry] = None,
                       **overrides) -> OptConfig:
    geom = geom or CaseGeometry(kind=kind)
    if kind == "benchmark":
        base = dict(tau=5e-4, L_phi=0.05, alpha_t=1.0,
                    gamma_phi_n="ndd+right")
    else:
        base = dict(tau=5e-5, L_phi=geom.D_ex, alpha_t=0.01,
                    gamma_phi_n="ndd" if kind == "open" else "ndd+right")
    base.update(overrides)
    return OptConfig(**base)


def phi_dirichlet_vertices(background: TriMesh, cfg: OptConfig):
    """Design-box boundary nodes held at phi = -1 during the update."""
    if cfg.gamma_phi_n == "ndd+right":
        return np.empty(0, dtype=np.int64)
    # design vertices on the outer domain boundary (the right duct end)
    bnd = np.zeros(background.num_vertices, dtype=bool)
    be = background.edges[background.boundary_edge_ids()]
    bnd[be.ravel()] = True
    return np.nonzero(design_vertex_mask(background) & bnd)[0]


@dataclass
class SensitivityState:
    """Exponentially averaged sensitivity on the background mesh."""

    mesh: TriMesh
    jbar: Optional[np.ndarray] = None


def filter_sensitivity(state: SensitivityState, jp_new,
                       alpha_t: float) -> np.ndarray:
    jp_new = np.asarray(jp_new, dtype=float)
    if len(jp_new) != state.mesh.num_vertices:
        raise ValueError("sensitivity not aligned with the background mesh")
    if state.jbar is None:
        state.jbar = jp_new.copy()
    else:
        state.jbar = alpha_t * jp_new + (1.0 - alpha_t) * state.jbar
    return state.jbar


def update_levelset(ls: LevelSetField, jbar, cfg: OptConfig,
                    dirichlet=None) -> LevelSetField:
    """One semi-implicit reaction-diffusion step, clamped to [-1, 1]."""
    mesh = ls.mesh
    jbar = np.asarray(jbar, dtype=float)
    if len(jbar) != mesh.num_vertices:
        raise ValueError("sensitivity not aligned with the background mesh")
    dtri = design_tri_indices(mesh)
    if len(dtri) == 0:
        raise ValueError("mesh has no design region")
    space = fem.P1Space(mesh)
    M = fem.assemble_matrix(space, mass=1.0, tri_idx=dtri)
    K = fem.assemble_matrix(space, stiff=1.0, tri_idx=dtri)
    area = float(np.sum(mesh.signed_areas()[dtri]))
    j_int = float(np.sum(M @ np.abs(jbar)).real)
    if j_int > 0.0:
        c_j = area / j_int
        react = cfg.k_dt * c_j * jbar
    else:
        warnings.warn("zero sensitivity integral; diffusion-only step")
        react = 0.0
    b = M @ (ls.phi - react)
    A = M + (cfg.k_dt * cfg.tau * cfg.L_phi ** 2) * K

    free = design_vertex_mask(mesh)
    x = ls.phi.astype(complex)
    if dirichlet is not None and len(dirichlet):
        free[np.asarray(dirichlet, dtype=np.int64)] = False
        x[np.asarray(dirichlet, dtype=np.int64)] = -1.0
    fixed = np.nonzero(~free)[0]
    sys = fem.DirichletSystem(A.tocsr(), fixed)
    phi_new = sys.solve(b, dirichlet_values=x).real
    return LevelSetField(mesh, np.clip(phi_new, -1.0, 1.0))


def convergence_metric(j_history, window: int = 10) -> float:
    """Moving average of the relative objective change; NaN until filled."""
    j = np.asarray(j_history, dtype=float)
    if len(j) < window + 1:
        return float("nan")
    num = np.abs(np.diff(j[-(window + 1):]))
    den = np.abs(j[-(window + 1):-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0.0, num / den, np.where(num > 0.0, np.inf, 0.0))
    return float(np.mean(rel))


def check_convergence(j_history, window: int = 10,
                      threshold: float = 5e-3) -> bool:
    m = convergence_metric(j_history, window)
    return bool(np.isfinite(m) and m < threshold)


@dataclass
class IterationRecord:
    iteration: int
    J: float
    conv_metric: float
    num_nodes: int
    num_tris: int


@dataclass
class OptimizationResult:
    history: list            # IterationRecord per iteration
    levelset: LevelSetField  # final design
    mesh: TriMesh            # final refined analysis mesh
    report: ObjectiveReport  # frequency response of the final design
    converged: bool

    @property
    def j_history(self):
        return [r.J for r in self.history]


def run_optimization(geom: CaseGeometry, props: AirProperties,
                     grid: FrequencyGrid, cfg: Optional[OptConfig] = None,
                     preset: str = "all-air", phi0=None,
                     coarse: Optional[float] = None, beta_e: float = 3e-4,
                     fine_size: Optional[float] = None, grading: float = 0.3,
                     rigid: Optional[FictitiousRigid] = None,
                     max_nodes: int = 600_000,
                     callback: Optional[Callable] = None,
                     background: Optional[TriMesh] = None,
                     sens: Optional[SensitivityState] = None
                     ) -> OptimizationResult:
    """Full design loop: remesh, solve, adjoint, filter, update.

    Each iteration conforms the background mesh to the current zero
    isoline, refines toward the air/rigid interface, solves the forward
    and adjoint problems at every grid frequency, projects the
    sensitivity back to the background nodes, filters it in fictitious
    time and advances phi. Deterministic for a given configuration.

    ``callback(iteration, state)`` is invoked once per iteration with a
    dict holding the current levelset, refined mesh, record and fields.
    """
    cfg = cfg or default_opt_config(geom.kind, geom)
    coarse = coarse or geom.D_ex / 15.0
    background = background if background is not None \
        else build_case_geometry(geom, coarse)
    if phi0 is not None:
        ls = LevelSetField(background, phi0)
    else:
        ls = init_levelset(background, preset, geom)
    sens = sens or SensitivityState(background)
    dirichlet = phi_dirichlet_vertices(background, cfg)
    lam_v_fin = compute_wavenumbers(props, grid.omega_fin).lambda_v
    kind = geom.kind
    objective = "benchmark" if kind == "benchmark" else "band"
    nv_bg = background.num_vertices
    history, report, ref, converged = [], None, None, False

    for it in range(cfg.max_iters):
        try:
            conf = conform_to_levelset(background, ls.phi)
            dist = distance.solve_distance_field(
                conf, distance.default_alpha_e(conf))
            sized = distance.build_size_field(conf, dist, beta_e, lam_v_fin,
                                              coarse, grading=grading,
                                              fine=fine_size)
            ref = refine_mesh(sized, max_nodes=max_nodes)

            def one(w):
                sol = solve_forward(ref, props, w, kind, rigid,
                                    d_w=geom.d_w, keep_systems="p")
                loads = build_adjoint_load(sol, kind, n_freqs=len(grid),
                                           objective=objective, d_w=geom.d_w)
                q = solve_adjoint_pressure(sol, loads)
                sol.p_system = None  # release the factorization
                return sol, q

            pairs = map_frequencies(one, grid.omegas)
            report = ObjectiveReport(
                omegas=tuple(grid.omegas),
                s11=[s.s11 for s, _ in pairs],
                s21=[s.s21 for s, _ in pairs],
                alphas=[s.alpha for s, _ in pairs])
            dtj_ref = topological_derivative(
                ref, [(s.p, q, s.wn) for s, q in pairs], props)
            del pairs
            # background vertices keep their indices through conform/refine
            jp = design_sensitivity(dtj_ref[:nv_bg], ls.chi)
            jbar = filter_sensitivity(sens, jp, cfg.alpha_t)
        except Exception as exc:
            raise RuntimeError(f"optimization iteration {it} failed: {exc}") \
                from exc

        rec = IterationRecord(
            iteration=it, J=report.J,
            conv_metric=convergence_metric([r.J for r in history]
                                           + [report.J], cfg.window),
            num_nodes=ref.num_vertices, num_tris=ref.num_triangles)
        history.append(rec)
        if callback is not None:
            callback(it, dict(levelset=ls, mesh=ref, record=rec,
                              report=report, jbar=jbar))
        if np.isfinite(rec.conv_metric) and rec.conv_metric < cfg.threshold:
            converged = True
            break
        ls = update_levelset(ls, jbar, cfg, dirichlet)

    return OptimizationResult(history=history, levelset=ls, mesh=ref,
                              report=report, converged=converged)
