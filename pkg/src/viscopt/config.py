"""TOML run configuration with strict key validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .levelset import OptConfig, default_opt_config
from .mesh import CaseGeometry
from .physics import AirProperties, FictitiousRigid, FrequencyGrid, grid_from_hz

_CASE_KEYS = ("kind", "D_ex", "L_NDD", "L_D", "t_w", "d_w", "probe_x1")
_AIR_KEYS = ("rho0", "c0", "mu", "lam", "kappa", "Cp", "Cv", "gamma",
             "T0", "p0", "tau_loss")
_FREQ_KEYS = ("f_init", "f_fin", "n")
_MESH_KEYS = ("coarse", "alpha_e", "beta_e", "fine", "grading", "max_nodes")
_RIGID_KEYS = ("c_r1", "c_r2")
_OPT_KEYS = ("tau", "L_phi", "k_dt", "alpha_t", "gamma_phi_n", "window",
             "threshold", "max_iters", "preset")
_OUT_KEYS = ("dir",)
_SECTIONS = {"case": _CASE_KEYS, "air": _AIR_KEYS, "frequency": _FREQ_KEYS,
             "mesh": _MESH_KEYS, "rigid": _RIGID_KEYS, "opt": _OPT_KEYS,
             "output": _OUT_KEYS}


@dataclass
class RunConfig:
    """Validated run parameters with all defaults filled in."""

    geometry: CaseGeometry
    air: AirProperties
    grid: FrequencyGrid
    opt: OptConfig
    rigid: FictitiousRigid
    preset: str = "all-air"
    coarse: Optional[float] = None   # None -> D_ex / 15
    alpha_e: Optional[float] = None  # None -> twice median edge length
    beta_e: float = 3e-4
    fine: Optional[float] = None     # None -> lambda_v(f_fin) / 5
    grading: float = 0.3
    max_nodes: int = 600_000
    out_dir: str = "out"

    @property
    def coarse_size(self) -> float:
        return self.coarse if self.coarse is not None \
            else self.geometry.D_ex / 15.0


def _check_keys(section: str, table: dict, allowed):
    for key in table:
        if key not in allowed:
            raise ValueError(
                f"unknown config key [{section}].{key}; "
                f"allowed: {', '.join(allowed)}")


def _positive(section, table, key, allow_zero=False):
    if key in table:
        v = table[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or \
                v < 0 or (v == 0 and not allow_zero):
            bound = ">= 0" if allow_zero else "> 0"
            raise ValueError(f"config key [{section}].{key} must be a "
                             f"number {bound}, got {v!r}")


def parse_config(data: dict) -> RunConfig:
    """Build a RunConfig from parsed TOML data; unknown keys rejected."""
    if not isinstance(data, dict):
        raise ValueError("config root must be a table")
    for section in data:
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]; allowed: "
                             f"{', '.join(_SECTIONS)}")
        if not isinstance(data[section], dict):
            raise ValueError(f"config section [{section}] must be a table")
        _check_keys(section, data[section], _SECTIONS[section])

    case = dict(data.get("case", {}))
    kind = case.pop("kind", "closed")
    try:
        geometry = CaseGeometry(kind=kind, **case)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section [case]: {exc}") from exc

    try:
        air = AirProperties(**data.get("air", {}))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section [air]: {exc}") from exc

    freq = data.get("frequency", {})
    for key in ("f_init", "f_fin"):
        _positive("frequency", freq, key)
    n = freq.get("n", 20)
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise ValueError(f"config key [frequency].n must be an integer >= 0, "
                         f"got {n!r}")
    try:
        grid = grid_from_hz(freq.get("f_init", 3000.0),
                            freq.get("f_fin", 6000.0), n)
    except ValueError as exc:
        raise ValueError(f"config section [frequency]: {exc}") from exc

    try:
        rigid = FictitiousRigid(**data.get("rigid", {}))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section [rigid]: {exc}") from exc

    opt = dict(data.get("opt", {}))
    preset = opt.pop("preset", "two-channel" if kind == "benchmark"
                     else "all-air")
    if preset not in ("all-air", "all-rigid", "two-channel"):
        raise ValueError(f"config key [opt].preset must be one of all-air, "
                         f"all-rigid, two-channel; got {preset!r}")
    try:
        opt_cfg = default_opt_config(kind, geometry, **opt)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"config section [opt]: {exc}") from exc

    mesh = data.get("mesh", {})
    for key in ("coarse", "alpha_e", "beta_e", "fine"):
        _positive("mesh", mesh, key)
    _positive("mesh", mesh, "grading")
    max_nodes = mesh.get("max_nodes", 600_000)
    if not isinstance(max_nodes, int) or max_nodes < 1000:
        raise ValueError("config key [mesh].max_nodes must be an integer "
                         f">= 1000, got {max_nodes!r}")

    out = data.get("output", {})
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ValueError("config key [output].dir must be a non-empty string")

    return RunConfig(
        geometry=geometry, air=air, grid=grid, opt=opt_cfg, rigid=rigid,
        preset=preset,
        coarse=mesh.get("coarse"), alpha_e=mesh.get("alpha_e"),
        beta_e=mesh.get("beta_e", 3e-4), fine=mesh.get("fine"),
        grading=mesh.get("grading", 0.3), max_nodes=max_nodes,
        out_dir=out_dir)


def load_config(path) -> RunConfig:
    """Parse and validate a TOML config file; empty file = all defaults."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{path}: TOML parse error: {exc}") from exc
    try:
        return parse_config(data)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
