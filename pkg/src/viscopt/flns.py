"""Fully coupled linearized Navier-Stokes oracle on the air subdomain.

Monolithic complex system in (vx, vy, T, p): quadratic velocity and
temperature, linear pressure (inf-sup stable pair). Used to verify the
sequential model and to evaluate viscous/thermal dissipation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import (L_IN, L_OUT, L_REF, L_RIGID, L_SYM, L_WALL, TriMesh)
from .physics import AirProperties
from .slns import incident_wave


@dataclass
class FLNSState:
    mesh: TriMesh
    omega: float
    props: AirProperties
    vx: np.ndarray  # P2 nodal complex
    vy: np.ndarray  # P2 nodal complex
    T: np.ndarray   # P2 nodal complex
    p: np.ndarray   # P1 nodal complex

    @property
    def k0(self):
        return self.omega / self.props.c0


def _basis(space):
    det, inv = fem.tri_geometry(space.mesh)
    w = fem.TRI_QW[None, :] * np.abs(det)[:, None]           # (nt, nq)
    grads = np.einsum("tde,qke->tqkd", inv, space.ref_grads)  # (nt,nq,k,2)
    return space.shapes, grads, w


def _block(rows, cols, sv, su, terms):
    """Bilinear block sum_i coef_i * (D_i u)(D_i v) as COO triplets.

    ``terms``: iterable of (dv, du, coef) with dv/du in {None, 0, 1}.
    """
    nv_loc = sv[0].shape[1]
    nu_loc = su[0].shape[1]
    loc = 0.0
    for dv, du, coef in terms:
        av = sv[0][None, :, :] if dv is None else sv[1][:, :, :, dv]
        au = su[0][None, :, :] if du is None else su[1][:, :, :, du]
        w = sv[2]
        loc = loc + coef * np.einsum("tq,tqk,tql->tkl",
                                     w, np.broadcast_to(av, w.shape + (nv_loc,)),
                                     np.broadcast_to(au, w.shape + (nu_loc,)))
    r = np.repeat(rows, nu_loc, axis=1).ravel()
    c = np.tile(cols, (1, nv_loc)).ravel()
    return r, c, loc.ravel()


def solve_flns(mesh: TriMesh, props: AirProperties, omega: float,
               kind: str = "closed") -> FLNSState:
    """Solve the coupled system at one frequency on an air-only mesh."""
    if not mesh.air_mask().all():
        raise ValueError("FLNS requires an air-only (body-fitted) mesh")
    s2 = fem.P2Space(mesh)
    s1 = fem.P1Space(mesh)
    n2, n1 = s2.ndof, s1.ndof
    b2 = _basis(s2)
    b1 = _basis(s1)
    vals2, grads2, w = b2
    ndof = 3 * n2 + n1
    off_vx, off_vy, off_T, off_p = 0, n2, 2 * n2, 3 * n2

    mu, lam = props.mu, props.lam
    rho0, Cp, kap, T0, p0 = props.rho0, props.Cp, props.kappa, props.T0, props.p0
    iw = 1j * omega

    R, C, V = [], [], []

    def add(row_off, col_off, sv, su, terms):
        r, c, v = _block(sv_cells[sv] + row_off, su_cells[su] + col_off,
                         bases[sv], bases[su], terms)
        R.append(r)
        C.append(c)
        V.append(v.astype(complex))

    bases = {2: b2, 1: b1}
    sv_cells = {2: s2.cells, 1: s1.cells}
    su_cells = sv_cells

    # momentum x: iwrho0 vx + 2mu exx dxv + mu (dyvx+dxvy) dyv + lam div dxv
    add(off_vx, off_vx, 2, 2, [(None, None, iw * rho0),
                               (0, 0, 2 * mu + lam), (1, 1, mu)])
    add(off_vx, off_vy, 2, 2, [(1, 0, mu), (0, 1, lam)])
    # momentum y
    add(off_vy, off_vx, 2, 2, [(0, 1, mu), (1, 0, lam)])
    add(off_vy, off_vy, 2, 2, [(None, None, iw * rho0),
                               (1, 1, 2 * mu + lam), (0, 0, mu)])
    # pressure in momentum: -int p d_i(v~_i)
    add(off_vx, off_p, 2, 1, [(0, None, -1.0)])
    add(off_vy, off_p, 2, 1, [(1, None, -1.0)])
    # temperature row (scaled by 1/T0 to keep the block complex-symmetric)
    add(off_T, off_T, 2, 2, [(None, None, -iw * rho0 * Cp / T0),
                             (0, 0, -kap / T0), (1, 1, -kap / T0)])
    add(off_T, off_p, 2, 1, [(None, None, iw / T0)])
    # continuity row (tested with -p~)
    add(off_p, off_vx, 1, 2, [(None, 0, -1.0)])
    add(off_p, off_vy, 1, 2, [(None, 1, -1.0)])
    add(off_p, off_p, 1, 1, [(None, None, -iw / p0)])
    add(off_p, off_T, 1, 2, [(None, None, iw / T0)])

    A = sp.coo_matrix((np.concatenate(V),
                       (np.concatenate(R), np.concatenate(C))),
                      shape=(ndof, ndof)).tocsr()

    # impedance rho0 c0 (v.n)(v~.n) on inlet/outlet: both vertical, n=(-+1,0)
    in_edges = mesh.label_edge_ids(L_IN)
    if len(in_edges) == 0:
        raise ValueError("mesh has no inlet boundary")
    out_edges = mesh.label_edge_ids(L_OUT)
    imp = fem.boundary_mass(s2, np.concatenate([in_edges, out_edges])
                            if len(out_edges) else in_edges,
                            coef=rho0 * props.c0)
    A = A + _embed(imp, ndof, off_vx)

    # incident load: sigma.n = -(2 P_in + rho0 c0 v.n) n on Gamma_in, n=(-1,0)
    k0 = omega / props.c0
    pts, _ = fem.edge_quad(mesh, in_edges)
    rhs = np.zeros(ndof, dtype=complex)
    rhs[off_vx:off_vx + n2] += fem.boundary_load(
        s2, in_edges, 2.0 * incident_wave(pts, k0))

    # Dirichlet: no-slip + isothermal walls, symmetry normal components
    wall_dofs = []
    for name in (L_WALL, L_RIGID):
        eids = mesh.label_edge_ids(name)
        if len(eids):
            wall_dofs.append(s2.edge_dofs(eids).ravel())
    wall_dofs = np.unique(np.concatenate(wall_dofs)) if wall_dofs else \
        np.empty(0, dtype=np.int64)
    fixed = [off_vx + wall_dofs, off_vy + wall_dofs, off_T + wall_dofs]
    sym = mesh.label_edge_ids(L_SYM)
    if len(sym):
        fixed.append(off_vy + np.unique(s2.edge_dofs(sym).ravel()))
    ref = mesh.label_edge_ids(L_REF)
    if len(ref):
        fixed.append(off_vx + np.unique(s2.edge_dofs(ref).ravel()))
    fixed = np.unique(np.concatenate(fixed))

    sys = fem.DirichletSystem(A, fixed)
    x = sys.solve(rhs)
    return FLNSState(mesh=mesh, omega=omega, props=props,
                     vx=x[off_vx:off_vx + n2], vy=x[off_vy:off_vy + n2],
                     T=x[off_T:off_T + n2], p=x[off_p:])


def _embed(block, ndof, offset):
    block = block.tocoo()
    return sp.coo_matrix((block.data, (block.row + offset,
                                       block.col + offset)),
                         shape=(ndof, ndof)).tocsr()


def flns_s_params(state: FLNSState):
    """S-parameters of the FLNS pressure (P1) against the incident wave."""
    from .slns import ComplexField, compute_s_params
    return compute_s_params(ComplexField(state.mesh, 1, state.p), state.k0)


@dataclass
class DissipationFields:
    mesh: TriMesh
    phi_v_qp: np.ndarray  # (nt, nq), W/m^3
    phi_h_qp: np.ndarray
    phi_v_int: float      # W per unit depth
    phi_h_int: float

    def nodal(self):
        """Lumped P1 projections (for export)."""
        return (fem.p1_project(self.mesh, self.phi_v_qp),
                fem.p1_project(self.mesh, self.phi_h_qp))


def compute_dissipation(state: FLNSState) -> DissipationFields:
    """Time-averaged viscous and thermal dissipation densities."""
    s2 = fem.P2Space(state.mesh)
    gT = fem.gradient_at_qp(s2, state.T)
    gvx = fem.gradient_at_qp(s2, state.vx)
    gvy = fem.gradient_at_qp(s2, state.vy)
    props = state.props
    phi_h = (props.kappa / (2.0 * props.T0)) * \
        (np.abs(gT[..., 0]) ** 2 + np.abs(gT[..., 1]) ** 2)
    div = gvx[..., 0] + gvy[..., 1]
    e12 = 0.5 * (gvx[..., 1] + gvy[..., 0])
    eps2 = (np.abs(gvx[..., 0]) ** 2 + np.abs(gvy[..., 1]) ** 2
            + 2.0 * np.abs(e12) ** 2)
    phi_v = 0.5 * (props.lam * np.abs(div) ** 2 + 2.0 * props.mu * eps2)
    return DissipationFields(
        mesh=state.mesh, phi_v_qp=phi_v, phi_h_qp=phi_h,
        phi_v_int=float(fem.integrate(s2, phi_v)),
        phi_h_int=float(fem.integrate(s2, phi_h)))


@dataclass
class EnergyBalance:
    incident: float
    absorbed_sparams: float
    dissipated: float
    mismatch: float  # |absorbed - dissipated| / absorbed


def energy_balance(state: FLNSState,
                   diss: Optional[DissipationFields] = None) -> EnergyBalance:
    """Compare S-parameter absorbed power with integrated dissipation."""
    if diss is None:
        diss = compute_dissipation(state)
    s11, s21 = flns_s_params(state)
    mesh = state.mesh
    in_edges = mesh.label_edge_ids(L_IN)
    pts, w = fem.edge_quad(mesh, in_edges)
    N_in = float(np.sum(w * np.abs(incident_wave(pts, state.k0)) ** 2))
    props = state.props
    p_inc = N_in / (2.0 * props.rho0 * props.c0)
    alpha = 1.0 - abs(s11) ** 2 - (abs(s21) ** 2 if s21 is not None else 0.0)
    absorbed = p_inc * alpha
    dissipated = diss.phi_v_int + diss.phi_h_int
    mism = abs(absorbed - dissipated) / max(abs(absorbed), 1e-300)
    return EnergyBalance(incident=p_inc, absorbed_sparams=absorbed,
                         dissipated=dissipated, mismatch=mism)
