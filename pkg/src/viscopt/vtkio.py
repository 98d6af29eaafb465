"""File emission and re-reading: legacy VTK ASCII and CSV tables.

All floating-point values are serialized with 17 significant digits so
round-trips are bit-exact. Boundary labels travel in a sidecar CSV next
to the VTK file since the legacy format has no edge-set concept.
"""

from __future__ import annotations

import csv
from typing import Optional

import numpy as np

from .mesh import TriMesh

VTK_HEADER = "# vtk DataFile Version 3.0"


def _fmt(x) -> str:
    return format(float(x), ".17g")


# -- legacy VTK ---------------------------------------------------------------

def write_vtk(path, mesh: TriMesh, point_data: Optional[dict] = None,
              vectors: Optional[dict] = None, title: str = "viscopt fields"):
    """Legacy ASCII unstructured grid (triangle cell type 5).

    ``point_data`` maps name -> real nodal array (vertex count);
    ``vectors`` maps name -> (n, 2) real array, padded with a zero z.
    Region tags are written as CELL_DATA "region".
    """
    nv, nt = mesh.num_vertices, mesh.num_triangles
    point_data = point_data or {}
    vectors = vectors or {}
    for name, arr in point_data.items():
        if len(arr) != nv:
            raise ValueError(f"point data {name!r} has {len(arr)} values, "
                             f"mesh has {nv} vertices")
    lines = [VTK_HEADER, title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    lines.append(f"CELL_DATA {nt}")
    lines.append("SCALARS region int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(int(r)) for r in mesh.region)
    if point_data or vectors:
        lines.append(f"POINT_DATA {nv}")
        for name, arr in point_data.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in np.asarray(arr, dtype=float))
        for name, arr in vectors.items():
            arr = np.asarray(arr, dtype=float)
            lines.append(f"VECTORS {name} double")
            lines.extend(f"{_fmt(vx)} {_fmt(vy)} 0" for vx, vy in arr)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Parse a file written by :func:`write_vtk`.

    Returns (vertices, triangles, cell_data, point_data, vectors).
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != VTK_HEADER:
        raise ValueError(f"{path}: not a legacy VTK file")
    i = lines.index("DATASET UNSTRUCTURED_GRID") + 1
    tok = lines[i].split()
    if tok[0] != "POINTS":
        raise ValueError(f"{path}: expected POINTS section")
    nv = int(tok[1])
    pts = np.array([lines[i + 1 + k].split()[:2] for k in range(nv)],
                   dtype=float)
    i += 1 + nv
    tok = lines[i].split()
    nt = int(tok[1])
    tris = np.array([lines[i + 1 + k].split()[1:4] for k in range(nt)],
                    dtype=np.int64)
    i += 1 + nt
    if not lines[i].startswith("CELL_TYPES"):
        raise ValueError(f"{path}: expected CELL_TYPES section")
    i += 1 + nt
    cell_data, point_data, vectors = {}, {}, {}
    target, count = None, 0
    while i < len(lines):
        tok = lines[i].split()
        if tok[0] == "CELL_DATA":
            target, count = cell_data, int(tok[1])
            i += 1
        elif tok[0] == "POINT_DATA":
            target, count = point_data, int(tok[1])
            i += 1
        elif tok[0] == "SCALARS":
            name, kind = tok[1], tok[2]
            i += 2  # skip LOOKUP_TABLE
            vals = [lines[i + k] for k in range(count)]
            dtype = np.int64 if kind == "int" else float
            target[name] = np.array(vals, dtype=dtype)
            i += count
        elif tok[0] == "VECTORS":
            name = tok[1]
            i += 1
            arr = np.array([lines[i + k].split()[:2] for k in range(count)],
                           dtype=float)
            vectors[name] = arr
            i += count
        else:
            raise ValueError(f"{path}: unexpected VTK line {lines[i]!r}")
    return pts, tris, cell_data, point_data, vectors


def write_labels_csv(path, mesh: TriMesh):
    """Sidecar boundary labels: one edge per row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge_v0", "edge_v1", "label"])
        for name in sorted(mesh.labels):
            for a, b in mesh.labels[name]:
                w.writerow([int(a), int(b), name])


def read_labels_csv(path):
    labels = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["edge_v0", "edge_v1", "label"]:
            raise ValueError(f"{path}: unexpected label CSV header {header}")
        for a, b, name in rd:
            labels.setdefault(name, []).append((int(a), int(b)))
    return {k: np.asarray(v, dtype=np.int64) for k, v in labels.items()}


def write_mesh(path, mesh: TriMesh, point_data=None, vectors=None):
    """VTK file plus ``<path minus .vtk>.labels.csv`` sidecar."""
    write_vtk(path, mesh, point_data, vectors)
    write_labels_csv(_sidecar(path), mesh)


def read_mesh(path) -> tuple:
    """Rebuild (TriMesh, point_data, vectors) from write_mesh output."""
    pts, tris, cell_data, point_data, vectors = read_vtk(path)
    region = cell_data.get("region")
    if region is None:
        region = np.zeros(len(tris), dtype=np.int8)
    labels = read_labels_csv(_sidecar(path))
    mesh = TriMesh(pts, tris, region.astype(np.int8), labels)
    return mesh, point_data, vectors


def _sidecar(path):
    path = str(path)
    base = path[:-4] if path.endswith(".vtk") else path
    return base + ".labels.csv"


# -- solution exports ---------------------------------------------------------

def solution_point_data(sol, dtj=None):
    """Standard nodal arrays of a forward solution (P2 vertex part)."""
    nv = sol.p.mesh.num_vertices
    p = sol.p.values[:nv]
    uv = sol.u_v.values[:nv]
    uh = sol.u_h.values[:nv]
    data = {"p_re": p.real, "p_im": p.imag, "p_abs": np.abs(p),
            "uv_re": uv.real, "uv_im": uv.imag,
            "uh_re": uh.real, "uh_im": uh.imag}
    if dtj is not None:
        data["dtj"] = np.asarray(dtj, dtype=float)
    return data


def export_solution(path, sol, dtj=None):
    write_mesh(path, sol.p.mesh, solution_point_data(sol, dtj))


def export_flns(path, state, dissipation=None):
    """FLNS state: velocity vectors, temperature, pressure, dissipation."""
    nv = state.mesh.num_vertices
    vx, vy = state.vx.values[:nv], state.vy.values[:nv]
    T = state.T.values[:nv]
    p = state.p.values[:nv]
    data = {"T_re": T.real, "T_im": T.imag,
            "p_re": p.real, "p_im": p.imag}
    if dissipation is not None:
        phv, phh = dissipation.nodal()
        data["phi_v"] = phv
        data["phi_h"] = phh
    vec = {"v_re": np.column_stack([vx.real, vy.real]),
           "v_im": np.column_stack([vx.imag, vy.imag])}
    write_mesh(path, state.mesh, data, vec)


# -- CSV tables ---------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path, header):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        got = next(rd)
        if got != header:
            raise ValueError(f"{path}: unexpected CSV header {got}")
        return list(rd)


SWEEP_HEADER = ["freq_hz", "alpha", "s11_re", "s11_im", "s21_re", "s21_im"]


def write_sweep_csv(path, report):
    """Frequency response; s21 columns empty without an outlet."""
    rows = []
    for f, a, s11, s21 in zip(report.freqs_hz, report.alphas, report.s11,
                              report.s21):
        row = [_fmt(f), _fmt(a), _fmt(s11.real), _fmt(s11.imag)]
        row += ["", ""] if s21 is None else [_fmt(s21.real), _fmt(s21.imag)]
        rows.append(row)
    _write_rows(path, SWEEP_HEADER, rows)


def read_sweep_csv(path):
    out = []
    for row in _read_rows(path, SWEEP_HEADER):
        s21 = None if row[4] == "" else complex(float(row[4]), float(row[5]))
        out.append((float(row[0]), float(row[1]),
                    complex(float(row[2]), float(row[3])), s21))
    return out


HISTORY_HEADER = ["iter", "J", "conv_metric", "num_nodes", "num_tris"]


def write_history_csv(path, history):
    rows = [[r.iteration, _fmt(r.J), _fmt(r.conv_metric),
             r.num_nodes, r.num_tris] for r in history]
    _write_rows(path, HISTORY_HEADER, rows)


def read_history_csv(path):
    return [(int(r[0]), float(r[1]), float(r[2]), int(r[3]), int(r[4]))
            for r in _read_rows(path, HISTORY_HEADER)]


HARNESS_HEADER = ["x0", "y0", "dJ_full", "dJ_p", "dJ_num"]


def write_harness_csv(path, rows):
    data = [[_fmt(r.x0), _fmt(r.y0), _fmt(r.dj_full), _fmt(r.dj_p),
             _fmt(r.dj_num)] for r in rows]
    _write_rows(path, HARNESS_HEADER, data)


def read_harness_csv(path):
    return [tuple(float(v) for v in r)
            for r in _read_rows(path, HARNESS_HEADER)]


DISSIPATION_HEADER = ["freq_hz", "phi_v_int", "phi_h_int"]


def write_dissipation_csv(path, rows):
    _write_rows(path, DISSIPATION_HEADER,
                [[_fmt(f), _fmt(v), _fmt(h)] for f, v, h in rows])


def read_dissipation_csv(path):
    return [tuple(float(v) for v in r)
            for r in _read_rows(path, DISSIPATION_HEADER)]


# -- optimization checkpoint --------------------------------------------------

def write_checkpoint(path, phi, jbar=None, iteration=0):
    """Plain-text resumable state: phi nodal values and filter history.

    Format: comment header with the iteration and node count, then one
    value per line for phi, then for jbar ("none" when absent).
    """
    phi = np.asarray(phi, dtype=float)
    lines = ["# viscopt checkpoint v1",
             f"# iteration {int(iteration)}",
             f"# nodes {len(phi)}",
             "# phi"]
    lines.extend(_fmt(v) for v in phi)
    if jbar is None:
        lines.append("# jbar none")
    else:
        jbar = np.asarray(jbar, dtype=float)
        if len(jbar) != len(phi):
            raise ValueError("jbar length differs from phi")
        lines.append("# jbar")
        lines.extend(_fmt(v) for v in jbar)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(path):
    """Returns (phi, jbar_or_None, iteration)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "# viscopt checkpoint v1":
        raise ValueError(f"{path}: not a viscopt checkpoint")
    iteration = int(lines[1].split()[-1])
    n = int(lines[2].split()[-1])
    if lines[3] != "# phi":
        raise ValueError(f"{path}: malformed checkpoint")
    phi = np.array(lines[4:4 + n], dtype=float)
    tail = lines[4 + n]
    if tail == "# jbar none":
        jbar = None
    elif tail == "# jbar":
        jbar = np.array(lines[5 + n:5 + 2 * n], dtype=float)
    else:
        raise ValueError(f"{path}: malformed checkpoint")
    return phi, jbar, iteration
