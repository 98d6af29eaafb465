"""Sequential viscothermal acoustics: u_v, u_h then pressure.

Two scalar Helmholtz problems give the viscous and thermal fields
u_v, u_h; they enter a modified Helmholtz equation for pressure which
is solved over the whole domain with a large fictitious (rho, K) in the
rigid phase. Time convention exp(+i w t), incident wave
P_in = exp(-i k0 x1) entering through the left boundary.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fem
from .mesh import (L_IN, L_OUT, L_PROBE1, L_PROBE2, L_RIGID, L_WALL, TriMesh)
from .physics import (AirProperties, FictitiousRigid, FrequencyGrid,
                      Wavenumbers, compute_wavenumbers)


@dataclass
class ComplexField:
    """Nodal complex field on a P1 or P2 space of a mesh."""

    mesh: TriMesh
    order: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        ndof = fem.make_space(self.mesh, self.order).ndof
        if len(self.values) != ndof:
            raise ValueError(f"field has {len(self.values)} values, "
                             f"space has {ndof} dofs")


def unit_field(mesh: TriMesh, order=2) -> ComplexField:
    return ComplexField(mesh, order,
                        np.ones(fem.make_space(mesh, order).ndof))


def incident_wave(points, k0):
    """P_in = exp(-i k0 x1) at the given points (last axis = xy)."""
    return np.exp(-1j * k0 * np.asarray(points)[..., 0])


def _wall_dofs(space):
    ids = []
    for name in (L_WALL, L_RIGID):
        eids = space.mesh.label_edge_ids(name)
        if len(eids):
            ids.append(space.edge_dofs(eids).ravel())
    if not ids:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(ids))


class ChannelSystem:
    """Helmholtz problem  u + k^-2 lap(u) = f  with u = 0 on walls.

    The bilinear form is shared by the forward viscous/thermal fields
    and their adjoints, so the factorization is built once and reused.
    """

    def __init__(self, mesh: TriMesh, k_phi: complex):
        if k_phi == 0:
            raise ValueError("k_phi must be nonzero")
        self.mesh = mesh
        self.k2inv = 1.0 / k_phi ** 2
        self.space = fem.P2Space(mesh)
        A = fem.assemble_matrix(self.space, stiff=self.k2inv, mass=-1.0)
        self._air = np.nonzero(mesh.air_mask())[0]
        self.system = fem.DirichletSystem(A, _wall_dofs(self.space))

    def solve_forward(self) -> ComplexField:
        """Unit source on the air region, homogeneous elsewhere."""
        b = -fem.assemble_load(self.space, 1.0 + 0j, tri_idx=self._air)
        return ComplexField(self.mesh, 2, self.system.solve(b))

    def solve_adjoint(self, source_qp=None, neumann=()) -> ComplexField:
        """Solve  u + k^-2 lap(u) = S  with flux data k^-2 n.grad(u) = g.

        ``source_qp`` is (n_air_tris, nq) at the air quadrature points;
        ``neumann`` is a sequence of (edge_ids, g at edge quad points).
        """
        b = np.zeros(self.space.ndof, dtype=complex)
        if source_qp is not None:
            b -= fem.assemble_load(self.space, source_qp, tri_idx=self._air)
        for eids, g in neumann:
            if len(eids):
                b += fem.boundary_load(self.space, eids, g)
        return ComplexField(self.mesh, 2, self.system.solve(b))


def solve_u_phi(mesh: TriMesh, k_phi: complex) -> ComplexField:
    return ChannelSystem(mesh, k_phi).solve_forward()


class PressureSystem:
    """Helmholtz pressure problem with fictitious rigid material.

    The operator is complex-symmetric and identical for the forward and
    adjoint problems, so one factorization serves both.
    """

    def __init__(self, mesh: TriMesh, u_v: ComplexField, u_h: ComplexField,
                 wn: Wavenumbers, props: AirProperties,
                 rigid: Optional[FictitiousRigid] = None):
        self.mesh = mesh
        self.wn = wn
        self.props = props
        rigid = rigid or FictitiousRigid()
        space = fem.P2Space(mesh)
        self.space = space
        air = np.nonzero(mesh.air_mask())[0]
        rig = np.nonzero(~mesh.air_mask())[0]
        w2 = wn.omega ** 2
        K0 = props.K_complex
        g = props.gamma
        uv_qp = fem.field_at_qp(space, u_v.values, air)
        uh_qp = fem.field_at_qp(space, u_h.values, air)
        A = fem.assemble_matrix(
            space, stiff=uv_qp / props.rho0,
            mass=-(w2 / K0) * (g - (g - 1.0) * uh_qp), tri_idx=air)
        if len(rig):
            A = A + fem.assemble_matrix(
                space, stiff=1.0 / rigid.rho_r(props),
                mass=-(w2 / rigid.K_r(props)) + 0j, tri_idx=rig)
        self.in_edges = mesh.label_edge_ids(L_IN)
        if len(self.in_edges) == 0:
            raise ValueError("mesh has no inlet boundary")
        self.out_edges = mesh.label_edge_ids(L_OUT)
        k0 = wn.k0
        self._uv_in = fem.edge_field_at_qp(space, u_v.values, self.in_edges)
        robin = [(self.in_edges, self._uv_in)]
        if len(self.out_edges):
            robin.append((self.out_edges,
                          fem.edge_field_at_qp(space, u_v.values,
                                               self.out_edges)))
        for eids, uv in robin:
            A = A + fem.boundary_mass(space, eids,
                                      coef=1j * k0 / props.rho0 * uv)
        self.system = fem.DirichletSystem(A, np.empty(0, dtype=np.int64))
        pts, w = fem.edge_quad(mesh, self.in_edges)
        self._pin_in = incident_wave(pts, k0)
        self.N_in = float(np.sum(w * np.abs(self._pin_in) ** 2).real)

    def solve_forward(self) -> ComplexField:
        b = fem.boundary_load(
            self.space, self.in_edges,
            (2j * self.wn.k0 / self.props.rho0) * self._uv_in * self._pin_in)
        return ComplexField(self.mesh, 2, self.system.solve(b))

    def solve_adjoint(self, loads) -> ComplexField:
        """Solve with boundary loads [(edge_ids, g at edge quad points)]."""
        b = np.zeros(self.space.ndof, dtype=complex)
        for eids, g in loads:
            if len(eids):
                b += fem.boundary_load(self.space, eids, g)
        return ComplexField(self.mesh, 2, self.system.solve(b))


def solve_pressure(mesh, u_v, u_h, wn, props, rigid=None) -> ComplexField:
    return PressureSystem(mesh, u_v, u_h, wn, props, rigid).solve_forward()


def compute_s_params(p: ComplexField, k0: complex):
    """Boundary-integral reflection/transmission coefficients.

    S21 is None when the mesh has no outlet boundary.
    """
    mesh = p.mesh
    space = fem.make_space(mesh, p.order)
    in_edges = mesh.label_edge_ids(L_IN)
    if len(in_edges) == 0:
        raise ValueError("zero-measure inlet boundary")
    pts, w = fem.edge_quad(mesh, in_edges)
    pin = incident_wave(pts, k0)
    norm = np.sum(w * pin * np.conj(pin))
    if abs(norm) == 0.0:
        raise ValueError("zero-measure inlet boundary")
    p_in = fem.edge_field_at_qp(space, p.values, in_edges)
    s11 = np.sum(w * (p_in - pin) * np.conj(pin)) / norm
    out_edges = mesh.label_edge_ids(L_OUT)
    s21 = None
    if len(out_edges):
        pts_o, w_o = fem.edge_quad(mesh, out_edges)
        pin_o = incident_wave(pts_o, k0)
        p_out = fem.edge_field_at_qp(space, p.values, out_edges)
        s21 = np.sum(w_o * p_out * np.conj(pin_o)) / norm
    return complex(s11), (None if s21 is None else complex(s21))


def compute_alpha(s11, s21, kind) -> float:
    """Absorption coefficient from S-parameters; clamps tiny overshoot."""
    a = 1.0 - abs(s11) ** 2
    if kind == "open":
        if s21 is None:
            raise ValueError("open case requires S21")
        a -= abs(s21) ** 2
    if a < -0.01 or a > 1.01:
        raise RuntimeError(f"absorption coefficient {a:.4g} outside [0, 1]; "
                           "solver-quality failure")
    return float(min(max(a, 0.0), 1.0))


def _mean_probe_pressure(p: ComplexField, label):
    eids = p.mesh.label_edge_ids(label)
    if len(eids) == 0:
        raise ValueError(f"missing probe boundary {label!r}")
    space = fem.make_space(p.mesh, p.order)
    _, w = fem.edge_quad(p.mesh, eids)
    vals = fem.edge_field_at_qp(space, p.values, eids)
    return np.sum(w * vals) / np.sum(w)


def compute_benchmark_alpha(p: ComplexField, d_w: float, k0: complex) -> float:
    """Two-point transfer-function absorption estimate.

    Uses pressures averaged over the two probe lines separated by d_w.
    """
    P1 = _mean_probe_pressure(p, L_PROBE1)
    P2 = _mean_probe_pressure(p, L_PROBE2)
    den = P2 - P1 * np.exp(1j * k0 * d_w)
    scale = max(abs(P1), abs(P2))
    if abs(den) < 1e-10 * scale:
        raise RuntimeError("singular probe spacing: k0*d_w too close to a "
                           "multiple of pi")
    r = (P1 * np.exp(-1j * k0 * d_w) - P2) / den
    return float(1.0 - abs(r) ** 2)


@dataclass
class ForwardSolution:
    """All per-frequency forward state; systems kept for adjoint reuse."""

    omega: float
    wn: Wavenumbers
    u_v: ComplexField
    u_h: ComplexField
    p: ComplexField
    s11: complex
    s21: Optional[complex]
    alpha: float
    uv_system: Optional[ChannelSystem] = None
    uh_system: Optional[ChannelSystem] = None
    p_system: Optional[PressureSystem] = None


def solve_forward(mesh: TriMesh, props: AirProperties, omega: float,
                  kind: str, rigid: Optional[FictitiousRigid] = None,
                  mode: str = "slns", d_w: float = None,
                  keep_systems=False) -> ForwardSolution:
    """One frequency of the sequential model.

    mode: "slns" (viscothermal), "unit" (u_v = u_h = 1; lossless when
    tau_loss is zero, bulk-loss comparison otherwise).
    keep_systems: True keeps all three factorizations for adjoint reuse,
    "p" keeps only the pressure one (enough for the adjoint pressure).
    """
    keep_u = keep_systems is True
    keep_p = keep_u or keep_systems == "p"
    wn = compute_wavenumbers(props, omega)
    if mode == "slns":
        uv_sys = ChannelSystem(mesh, wn.k_v)
        u_v = uv_sys.solve_forward()
        if not keep_u:
            uv_sys = None  # release the factorization
        uh_sys = ChannelSystem(mesh, wn.k_h)
        u_h = uh_sys.solve_forward()
        if not keep_u:
            uh_sys = None
    elif mode == "unit":
        uv_sys = uh_sys = None
        u_v = unit_field(mesh)
        u_h = unit_field(mesh)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    psys = PressureSystem(mesh, u_v, u_h, wn, props, rigid)
    p = psys.solve_forward()
    s11, s21 = compute_s_params(p, wn.k0)
    if kind == "benchmark":
        if d_w is None:
            raise ValueError("benchmark case needs probe spacing d_w")
        alpha = compute_benchmark_alpha(p, d_w, wn.k0)
    else:
        alpha = compute_alpha(s11, s21, kind)
    return ForwardSolution(
        omega=omega, wn=wn, u_v=u_v, u_h=u_h, p=p, s11=s11, s21=s21,
        alpha=alpha, uv_system=uv_sys, uh_system=uh_sys,
        p_system=psys if keep_systems else None)


def max_workers() -> int:
    env = os.environ.get("VISCOPT_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def map_frequencies(fn, omegas):
    """Apply fn to each frequency, concurrently when allowed."""
    omegas = list(omegas)
    n = max_workers()
    if n <= 1 or len(omegas) <= 1:
        return [fn(w) for w in omegas]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, omegas))


@dataclass
class ObjectiveReport:
    """Per-frequency response plus the band-averaged objective."""

    omegas: tuple
    s11: list
    s21: list
    alphas: list
    J: float = field(init=False)

    def __post_init__(self):
        self.J = -float(np.mean(self.alphas))

    @property
    def freqs_hz(self):
        return tuple(w / (2.0 * np.pi) for w in self.omegas)


def frequency_sweep(mesh: TriMesh, props: AirProperties, grid: FrequencyGrid,
                    kind: str, rigid: Optional[FictitiousRigid] = None,
                    mode: str = "slns", d_w: float = None) -> ObjectiveReport:
    def one(w):
        try:
            return solve_forward(mesh, props, w, kind, rigid, mode, d_w)
        except Exception as exc:
            raise RuntimeError(
                f"frequency solve failed at omega={w:.6g} rad/s "
                f"({w / (2 * np.pi):.6g} Hz): {exc}") from exc

    sols = map_frequencies(one, grid.omegas)
    return ObjectiveReport(
        omegas=tuple(grid.omegas),
        s11=[s.s11 for s in sols],
        s21=[s.s21 for s in sols],
        alphas=[s.alpha for s in sols])
