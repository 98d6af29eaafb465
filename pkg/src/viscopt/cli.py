"""Command-line entry point: solve / sweep / optimize / verify-td / flns-check."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import distance, vtkio
from .adjoint import td_fd_harness
from .config import RunConfig, load_config, parse_config
from .flns import compute_dissipation, flns_s_params, solve_flns
from .levelset import init_levelset, run_optimization
from .mesh import (build_case_geometry, conform_to_levelset,
                   extract_air_submesh, refine_mesh)
from .physics import compute_wavenumbers
from .slns import compute_alpha, frequency_sweep, solve_forward


def _build_parser():
    p = argparse.ArgumentParser(
        prog="viscopt",
        description="Viscothermal acoustic analysis and sound-absorber "
                    "topology optimization.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None,
                        help="TOML config file (defaults used when omitted)")
        sp.add_argument("--out", default=None,
                        help="output directory (overrides [output].dir)")

    sp = sub.add_parser("solve", help="single-frequency viscothermal solve "
                                      "with field export")
    common(sp)
    sp.add_argument("--freq", type=float, default=None,
                    help="frequency in Hz (default: band start)")

    sp = sub.add_parser("sweep", help="frequency-response CSV over the band")
    common(sp)
    sp.add_argument("--flns", action="store_true",
                    help="also sweep the full model on the air submesh")

    sp = sub.add_parser("optimize", help="run the design optimization loop")
    common(sp)
    sp.add_argument("--snapshot-every", type=int, default=0, metavar="K",
                    help="write a design snapshot VTK every K iterations")
    sp.add_argument("--max-iters", type=int, default=None,
                    help="override the iteration cap")

    sp = sub.add_parser("verify-td", help="finite-difference check of the "
                                          "topological derivative")
    common(sp)

    sp = sub.add_parser("flns-check", help="compare the sequential and full "
                                           "models over the band")
    common(sp)
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.out:
        cfg.out_dir = args.out
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg


def _analysis_mesh(cfg: RunConfig, phi=None):
    """Background -> conform to the design -> boundary-layer refinement."""
    bg = build_case_geometry(cfg.geometry, cfg.coarse_size)
    if phi is None:
        phi = init_levelset(bg, cfg.preset, cfg.geometry).phi
    conf = conform_to_levelset(bg, phi)
    alpha_e = cfg.alpha_e or distance.default_alpha_e(conf)
    dist = distance.solve_distance_field(conf, alpha_e)
    lam_v = compute_wavenumbers(cfg.air, cfg.grid.omega_fin).lambda_v
    sized = distance.build_size_field(conf, dist, cfg.beta_e, lam_v,
                                      cfg.coarse_size, grading=cfg.grading,
                                      fine=cfg.fine)
    return refine_mesh(sized, max_nodes=cfg.max_nodes)


def _cmd_solve(args) -> int:
    cfg = _load(args)
    freq = args.freq if args.freq is not None \
        else cfg.grid.omega_init / (2.0 * np.pi)
    if freq <= 0.0:
        raise ValueError("--freq must be positive")
    mesh = _analysis_mesh(cfg)
    sol = solve_forward(mesh, cfg.air, 2.0 * np.pi * freq, cfg.geometry.kind,
                        cfg.rigid, d_w=cfg.geometry.d_w)
    path = os.path.join(cfg.out_dir, "solution.vtk")
    vtkio.export_solution(path, sol)
    print(f"freq_hz={freq:.17g} alpha={sol.alpha:.17g} "
          f"abs_s11={abs(sol.s11):.17g}")
    print(f"wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    mesh = _analysis_mesh(cfg)
    report = frequency_sweep(mesh, cfg.air, cfg.grid, cfg.geometry.kind,
                             cfg.rigid, d_w=cfg.geometry.d_w)
    path = os.path.join(cfg.out_dir, "sweep.csv")
    vtkio.write_sweep_csv(path, report)
    print(f"wrote {path}")
    if args.flns:
        sub, _ = extract_air_submesh(mesh)
        rows, alphas, s11s, s21s = [], [], [], []
        for w in cfg.grid.omegas:
            st = solve_flns(sub, cfg.air, w, cfg.geometry.kind)
            s11, s21 = flns_s_params(st)
            alphas.append(compute_alpha(s11, s21, cfg.geometry.kind))
            s11s.append(s11)
            s21s.append(s21)
            di = compute_dissipation(st)
            rows.append((w / (2.0 * np.pi), di.phi_v_int, di.phi_h_int))
        from .slns import ObjectiveReport
        rep_f = ObjectiveReport(omegas=tuple(cfg.grid.omegas), s11=s11s,
                                s21=s21s, alphas=alphas)
        path_f = os.path.join(cfg.out_dir, "sweep_flns.csv")
        vtkio.write_sweep_csv(path_f, rep_f)
        path_d = os.path.join(cfg.out_dir, "dissipation.csv")
        vtkio.write_dissipation_csv(path_d, rows)
        print(f"wrote {path_f}")
        print(f"wrote {path_d}")
    return 0


def _cmd_optimize(args) -> int:
    cfg = _load(args)
    if args.max_iters is not None:
        from dataclasses import replace
        cfg.opt = replace(cfg.opt, max_iters=args.max_iters)
    hist_path = os.path.join(cfg.out_dir, "history.csv")
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.txt")
    records = []

    def callback(it, state):
        records.append(state["record"])
        vtkio.write_history_csv(hist_path, records)
        ls = state["levelset"]
        vtkio.write_checkpoint(ckpt_path, ls.phi, state["jbar"], it)
        if args.snapshot_every and it % args.snapshot_every == 0:
            snap = os.path.join(cfg.out_dir, f"design_{it:04d}.vtk")
            vtkio.write_mesh(snap, ls.mesh,
                             {"phi": ls.phi, "chi": ls.chi})
        r = state["record"]
        print(f"iter={r.iteration} J={r.J:.6g} nodes={r.num_nodes}",
              flush=True)

    res = run_optimization(
        cfg.geometry, cfg.air, cfg.grid, cfg.opt, preset=cfg.preset,
        coarse=cfg.coarse_size, beta_e=cfg.beta_e, fine_size=cfg.fine,
        grading=cfg.grading, rigid=cfg.rigid, max_nodes=cfg.max_nodes,
        callback=callback)
    vtkio.write_history_csv(hist_path, res.history)
    final = os.path.join(cfg.out_dir, "design_final.vtk")
    vtkio.write_mesh(final, res.levelset.mesh,
                     {"phi": res.levelset.phi, "chi": res.levelset.chi})
    vtkio.write_sweep_csv(os.path.join(cfg.out_dir, "sweep_final.csv"),
                          res.report)
    print(f"converged={res.converged} iterations={len(res.history)} "
          f"final_J={res.history[-1].J:.17g}")
    print(f"wrote {hist_path}")
    print(f"wrote {final}")
    return 0


def _cmd_verify_td(args) -> int:
    cfg = _load(args)
    geom = cfg.geometry
    if geom.kind != "open":
        from .mesh import CaseGeometry
        geom = CaseGeometry(kind="open", D_ex=geom.D_ex, L_NDD=geom.L_NDD,
                            L_D=geom.L_D, t_w=geom.t_w)
    rows = td_fd_harness(geom, coarse=cfg.coarse_size, props=cfg.air,
                         band=cfg.beta_e, max_nodes=cfg.max_nodes)
    path = os.path.join(cfg.out_dir, "td_check.csv")
    vtkio.write_harness_csv(path, rows)
    ok = [r for r in rows if not r.skipped]
    djp = np.array([r.dj_p for r in ok])
    djn = np.array([r.dj_num for r in ok])
    agree = float(np.mean(np.sign(djp) == np.sign(djn)))
    corr = float(np.corrcoef(djp, djn)[0, 1])
    print(f"probes={len(ok)} sign_agreement={agree:.3f} "
          f"pearson={corr:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_flns_check(args) -> int:
    cfg = _load(args)
    mesh = _analysis_mesh(cfg)
    sub, _ = extract_air_submesh(mesh)
    rows = []
    worst = 0.0
    for w in cfg.grid.omegas:
        sol = solve_forward(sub, cfg.air, w, cfg.geometry.kind,
                            d_w=cfg.geometry.d_w)
        st = solve_flns(sub, cfg.air, w, cfg.geometry.kind)
        s11, s21 = flns_s_params(st)
        a_f = compute_alpha(s11, s21, cfg.geometry.kind)
        di = compute_dissipation(st)
        rows.append((w / (2.0 * np.pi), di.phi_v_int, di.phi_h_int))
        diff = abs(sol.alpha - a_f)
        worst = max(worst, diff)
        print(f"freq_hz={w / (2 * np.pi):.6g} alpha_slns={sol.alpha:.6g} "
              f"alpha_flns={a_f:.6g} diff={diff:.3g}")
    path = os.path.join(cfg.out_dir, "dissipation.csv")
    vtkio.write_dissipation_csv(path, rows)
    print(f"max_alpha_diff={worst:.6g}")
    print(f"wrote {path}")
    return 0


_COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep,
             "optimize": _cmd_optimize, "verify-td": _cmd_verify_td,
             "flns-check": _cmd_flns_check}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
