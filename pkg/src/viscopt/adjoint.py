"""Adjoint solves and topological-derivative sensitivities.

The pressure operator is complex-symmetric, so the adjoint pressure q
reuses the forward factorization with a boundary load derived from the
objective; the adjoint viscous/thermal fields v_v, v_h then reuse the
u_v, u_h factorizations with volumetric sources built from p and q.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import fem
from .mesh import (L_IN, L_OUT, L_PROBE1, L_PROBE2, TriLocator, TriMesh)
from .physics import AirProperties, Wavenumbers
from .slns import (ComplexField, ForwardSolution, incident_wave,
                   _mean_probe_pressure)


def build_adjoint_load(sol: ForwardSolution, kind: str, n_freqs: int = 1,
                       objective: str = "band", d_w: float = None):
    """Boundary load pairs [(edge_ids, g at edge quad points)] for q.

    The load g is defined by dJ = 2 Re[ integral g * dp ] for the chosen
    objective: "band" is the frequency-averaged -alpha, "s11sq" is
    |S11|^2 at a single frequency, "benchmark" the two-probe -alpha.
    """
    psys = sol.p_system
    if psys is None:
        raise ValueError("forward solution was solved without keep_systems")
    mesh = psys.mesh
    k0 = sol.wn.k0
    loads = []
    if objective in ("band", "s11sq"):
        scale = 1.0 / n_freqs if objective == "band" else 1.0
        g_in = scale * np.conj(sol.s11) * np.conj(psys._pin_in) / psys.N_in
        loads.append((psys.in_edges, g_in))
        if objective == "band" and kind == "open":
            out_edges = mesh.label_edge_ids(L_OUT)
            pts, _ = fem.edge_quad(mesh, out_edges)
            g_out = scale * np.conj(sol.s21) * \
                np.conj(incident_wave(pts, k0)) / psys.N_in
            loads.append((out_edges, g_out))
    elif objective == "benchmark":
        if d_w is None:
            raise ValueError("benchmark objective needs d_w")
        P1 = _mean_probe_pressure(sol.p, L_PROBE1)
        P2 = _mean_probe_pressure(sol.p, L_PROBE2)
        em = np.exp(-1j * k0 * d_w)
        ep = np.exp(1j * k0 * d_w)
        den = P2 - P1 * ep
        r = (P1 * em - P2) / den
        # J = -alpha = |r|^2 - 1; dJ = 2Re[conj(r) dr], dr linear in dP1, dP2
        A1 = np.conj(r) * (em + r * ep) / den
        A2 = np.conj(r) * (-1.0 - r) / den
        for label, coef in ((L_PROBE1, A1), (L_PROBE2, A2)):
            eids = mesh.label_edge_ids(label)
            _, w = fem.edge_quad(mesh, eids)
            loads.append((eids, coef / np.sum(w)))
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return loads


def solve_adjoint_pressure(sol: ForwardSolution, loads) -> ComplexField:
    if sol.p_system is None:
        raise ValueError("forward solution was solved without keep_systems")
    return sol.p_system.solve_adjoint(loads)


def solve_adjoint_uphi(sol: ForwardSolution, q: ComplexField,
                       props: AirProperties):
    """Adjoint viscous/thermal fields (v_v, v_h) from p and q."""
    if sol.uv_system is None or sol.uh_system is None:
        raise ValueError("forward u_phi systems not kept")
    psys = sol.p_system
    mesh = q.mesh
    space = fem.P2Space(mesh)
    air = np.nonzero(mesh.air_mask())[0]
    wn = sol.wn
    gp = fem.gradient_at_qp(space, sol.p.values, air)
    gq = fem.gradient_at_qp(space, q.values, air)
    p_qp = fem.field_at_qp(space, sol.p.values, air)
    q_qp = fem.field_at_qp(space, q.values, air)
    src_v = (gp[..., 0] * gq[..., 0] + gp[..., 1] * gq[..., 1]) / props.rho0
    src_h = (wn.omega ** 2 / props.K_complex) * (props.gamma - 1.0) * \
        p_qp * q_qp

    k0 = wn.k0
    in_edges = mesh.label_edge_ids(L_IN)
    out_edges = mesh.label_edge_ids(L_OUT)
    neu = []
    p_in = fem.edge_field_at_qp(space, sol.p.values, in_edges)
    q_in = fem.edge_field_at_qp(space, q.values, in_edges)
    pts, _ = fem.edge_quad(mesh, in_edges)
    pin = incident_wave(pts, k0)
    neu.append((in_edges,
                q_in * (-1j * k0 * p_in + 2j * k0 * pin) / props.rho0))
    if len(out_edges):
        p_out = fem.edge_field_at_qp(space, sol.p.values, out_edges)
        q_out = fem.edge_field_at_qp(space, q.values, out_edges)
        neu.append((out_edges, q_out * (-1j * k0 * p_out) / props.rho0))
    v_v = sol.uv_system.solve_adjoint(source_qp=src_v, neumann=neu)
    v_h = sol.uh_system.solve_adjoint(source_qp=src_h)
    return v_v, v_h


@dataclass
class AdjointState:
    omega: float
    q: ComplexField
    v_v: Optional[ComplexField] = None
    v_h: Optional[ComplexField] = None


def td_integrand_qp(mesh: TriMesh, p: ComplexField, q: ComplexField,
                    wn: Wavenumbers, props: AirProperties):
    """2 Re[(2/rho0) grad p . grad q - (w^2/K0) p q] at quadrature points."""
    space = fem.P2Space(mesh)
    gp = fem.gradient_at_qp(space, p.values)
    gq = fem.gradient_at_qp(space, q.values)
    p_qp = fem.field_at_qp(space, p.values)
    q_qp = fem.field_at_qp(space, q.values)
    val = (2.0 / props.rho0) * (gp[..., 0] * gq[..., 0]
                                + gp[..., 1] * gq[..., 1]) \
        - (wn.omega ** 2 / props.K_complex) * p_qp * q_qp
    return 2.0 * np.real(val)


def topological_derivative(mesh: TriMesh, pairs, props: AirProperties):
    """P1 nodal sum of the per-frequency integrands.

    ``pairs`` iterates over (p, q, wn) triples; the multi-frequency
    sensitivity is their plain sum.
    """
    acc = None
    for p, q, wn in pairs:
        v = td_integrand_qp(mesh, p, q, wn, props)
        acc = v if acc is None else acc + v
    return fem.p1_project(mesh, acc).real


def design_sensitivity(dtj_nodal, chi_nodal):
    """J' = D_T J * (1 - chi): zero wherever the phase is rigid."""
    return dtj_nodal * (1.0 - np.asarray(chi_nodal))


def full_delta_j(sol: ForwardSolution, adj: AdjointState,
                 props: AirProperties, eps: float, points,
                 locator: Optional[TriLocator] = None):
    """Estimated objective change for a rigid disc of radius eps.

    Returns (dJ_full, dJ_p) arrays over the probe points; the full
    estimate keeps the log-eps and viscous/thermal adjoint terms, the
    simplified one only the pressure part.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    mesh = sol.p.mesh
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if locator is None:
        locator = TriLocator(mesh)
    tri, _ = locator.locate(points)
    if np.any(~mesh.air_mask()[tri]):
        raise ValueError("probe point inside the rigid phase")
    space = fem.P2Space(mesh)

    def ev(fld):
        return fem.point_eval(space, fld.values, points, locator, grad=True)

    p, gp = ev(sol.p)
    q, gq = ev(adj.q)
    uv, guv = ev(sol.u_v)
    uh, guh = ev(sol.u_h)
    vv, gvv = ev(adj.v_v)
    vh, gvh = ev(adj.v_h)
    wn = sol.wn
    kv2i = 1.0 / wn.k_v ** 2
    kh2i = 1.0 / wn.k_h ** 2
    w2K = wn.omega ** 2 / props.K_complex
    g = props.gamma

    dot = lambda a, b: a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    pq_term = 2.0 * (uv / props.rho0) * dot(gp, gq) \
        - w2K * (g - (g - 1.0) * uh) * p * q
    bulk = (-2.0 * kv2i * dot(guv, gvv) - 2.0 * kh2i * dot(guh, gvh)
            - (uv - 1.0) * vv - (uh - 1.0) * vh + pq_term)
    log_part = (2.0 * np.pi / np.log(eps)) * (kv2i * uv * vv + kh2i * uh * vh)
    dj_full = 2.0 * np.real(log_part + np.pi * eps ** 2 * bulk)
    dj_p = 2.0 * np.pi * eps ** 2 * np.real(
        (2.0 / props.rho0) * dot(gp, gq) - w2K * p * q)
    return dj_full, dj_p


@dataclass
class HarnessRow:
    x0: float
    y0: float
    dj_full: float
    dj_p: float
    dj_num: float
    skipped: bool = False
    note: str = ""


def _disc_phi(vertices, center, radius):
    return radius - np.hypot(vertices[:, 0] - center[0],
                             vertices[:, 1] - center[1])


def td_fd_harness(geom=None, freq_hz: float = 2500.0, eps0: float = None,
                  n_probes: int = 24, probe_x=(0.06375, 0.12225),
                  probe_y: float = 0.012, coarse: float = 1.5e-3,
                  props: AirProperties = None, band: float = 3e-4,
                  local_size: float = None, max_nodes: int = 400_000):
    """Probe sweep comparing dJ estimates with brute-force differences.

    A fixed rigid disc (radius 0.1 D_ex, design-domain center) sits in an
    open duct; each probe removes a small disc of radius eps0 from the
    air and re-solves body-fitted (no fictitious material) for
    dJ_num = J(with probe hole) - J(without), with J = |S11|^2 at one
    frequency. dJ_full / dJ_p come from the adjoint of the base solve.
    """
    from . import distance
    from .mesh import (CaseGeometry, build_case_geometry, conform_to_levelset,
                       extract_air_submesh, refine_mesh)
    from .physics import compute_wavenumbers
    from .slns import solve_forward

    geom = geom or CaseGeometry(kind="open")
    props = props or AirProperties()
    eps0 = eps0 or geom.D_ex / 80.0
    omega = 2.0 * np.pi * freq_hz
    wn = compute_wavenumbers(props, omega)
    if local_size is None:
        local_size = min(wn.delta_v / 2.0, eps0 / 10.0)
    x0, y0, x1, y1 = geom.design_box
    disc_c = np.array([0.5 * (x0 + x1), 0.5 * (geom.height)])
    disc_r = 0.1 * geom.D_ex

    bg = build_case_geometry(geom, coarse)
    conf = conform_to_levelset(bg, _disc_phi(bg.vertices, disc_c, disc_r))
    dist = distance.solve_distance_field(conf, distance.default_alpha_e(conf))
    sized = distance.build_size_field(conf, dist, band, wn.lambda_v, coarse)
    base = refine_mesh(sized, max_nodes=max_nodes)

    def air_solve(mesh, keep=False):
        sub, _ = extract_air_submesh(mesh)
        sol = solve_forward(sub, props, omega, "open", keep_systems=keep)
        return sol, abs(sol.s11) ** 2

    base_sol, _ = air_solve(base, keep=True)
    loads = build_adjoint_load(base_sol, "open", objective="s11sq")
    q = solve_adjoint_pressure(base_sol, loads)
    v_v, v_h = solve_adjoint_uphi(base_sol, q, props)
    adj = AdjointState(omega=omega, q=q, v_v=v_v, v_h=v_h)
    # free the base factorizations before the probe re-solves
    base_sol.p_system = None
    base_sol.uv_system = None
    base_sol.uh_system = None

    probes = np.column_stack([
        np.linspace(probe_x[0], probe_x[1], n_probes),
        np.full(n_probes, probe_y)])
    dj_full, dj_p = full_delta_j(base_sol, adj, props, eps0, probes)

    def one_probe(i):
        c = probes[i]
        if np.hypot(*(c - disc_c)) < disc_r + 2 * eps0 or \
                c[1] + 2 * eps0 > geom.height or c[1] < 2 * eps0 or \
                c[0] < 2 * eps0 or c[0] + 2 * eps0 > geom.length:
            return HarnessRow(c[0], c[1], dj_full[i], dj_p[i], np.nan,
                              skipped=True, note="probe intersects boundary")
        size = base.vertex_size.copy()
        near = np.hypot(base.vertices[:, 0] - c[0],
                        base.vertices[:, 1] - c[1]) < 2.5 * eps0
        size[near] = np.minimum(size[near], local_size)
        local = refine_mesh(base, size=size, max_nodes=max_nodes)
        _, j_ref = air_solve(local)
        holed = conform_to_levelset(local, _disc_phi(local.vertices, c, eps0),
                                    preserve_rigid=True)
        _, j_hole = air_solve(holed)
        return HarnessRow(c[0], c[1], float(dj_full[i]), float(dj_p[i]),
                          float(j_hole - j_ref))

    from .slns import map_frequencies
    rows = map_frequencies(one_probe, range(n_probes))
    return rows
