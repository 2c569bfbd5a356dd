"""CSV writers for every computed artefact.

Each file starts with ``# key: value`` metadata lines followed by a CSV
header row. Angles are written in degrees.
"""

import csv
import math

import numpy as np


def _fmt(x):
    if isinstance(x, (str, bool, np.bool_)):
        return str(x).lower() if isinstance(x, (bool, np.bool_)) else x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.12g}"


def write_csv(path, header, rows, meta=None):
    """Write ``rows`` under ``header`` with optional metadata comments."""
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    """Read a file written by :func:`write_csv` into ``(meta, header, rows)``."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return meta, header, list(reader)


TRAJECTORY_HEADER = ["t", "vx", "vz", "x", "z", "theta"]
BIFURCATION_HEADER = ["theta_deg", "gamma_star_deg", "v_star", "vx_star", "vz_star", "delta", "tau", "kind",
                      "branch_id"]
TVM_HEADER = ["theta_deg", "vx", "vz", "accel_tangential"]
NULLCLINE_HEADER = ["theta_deg", "gamma_deg", "vx", "vz"]
FIELD_HEADER = ["vx", "vz", "rho", "masked"]
SIMULATION_HEADER = ["t", "x", "z", "vx", "vz", "theta_deg", "dist_tvm"]
VECTOR_FIELD_HEADER = ["vx", "vz", "ax", "az"]


def write_trajectories(path, trajectories, meta=None):
    """Several trajectories in one file; ``theta`` is in degrees, a ``traj`` column tells them apart."""
    rows = []
    for k, tr in enumerate(trajectories):
        for t, s, p, th in zip(tr.t, tr.states, tr.positions, tr.theta):
            rows.append((k, t, s[0], s[1], p[0], p[1], math.degrees(th)))
    write_csv(path, ["traj"] + TRAJECTORY_HEADER, rows, meta)


def equilibrium_row(eq, branch_id=""):
    return (math.degrees(eq.theta), math.degrees(eq.gamma_star), eq.v_star, eq.state.vx, eq.state.vz, eq.delta,
            eq.tau, eq.kind, branch_id)


def write_equilibria(path, equilibria, meta=None):
    write_csv(path, BIFURCATION_HEADER, [equilibrium_row(e) for e in equilibria], meta)


def write_bifurcation(path, diagram, meta=None):
    rows = [equilibrium_row(p, b.branch_id) for b in diagram.branches for p in b.points]
    write_csv(path, BIFURCATION_HEADER, rows, meta)


def tvm_rows(curve):
    deg = math.degrees(curve.theta)
    return [(deg, p[0], p[1], a) for p, a in zip(curve.points, curve.accel_tangential)]


def write_tvm(path, curve, meta=None):
    write_csv(path, TVM_HEADER, tvm_rows(curve), meta)


def write_surface(path, surface, meta=None):
    rows = [r for s in surface.slices if s is not None for r in tvm_rows(s)]
    meta = dict(meta or {})
    if surface.gaps:
        meta["gaps_theta_deg"] = " ".join(_fmt(math.degrees(t)) for t in surface.gaps)
    write_csv(path, TVM_HEADER, rows, meta)


def write_nullcline(path, curve, meta=None):
    deg = math.degrees(curve.theta)
    rows = [(deg, math.degrees(g), x, z) for g, x, z in zip(curve.gamma, curve.vx, curve.vz)]
    write_csv(path, NULLCLINE_HEADER, rows, meta)


def write_field(path, field, meta=None):
    meta = dict(meta or {})
    meta.update({
        "theta_deg": _fmt(math.degrees(field.theta)),
        "T": _fmt(field.T),
        "nx": len(field.vx),
        "nz": len(field.vz),
        "vx_range": f"{_fmt(field.vx[0])} {_fmt(field.vx[-1])}",
        "vz_range": f"{_fmt(field.vz[0])} {_fmt(field.vz[-1])}",
    })
    mask = field.mask
    rows = [(field.vx[i], field.vz[j], field.values[i, j], bool(mask[i, j]))
            for i in range(len(field.vx)) for j in range(len(field.vz))]
    write_csv(path, FIELD_HEADER, rows, meta)


def write_simulation(path, result, meta=None):
    dist = result.dist_tvm if result.dist_tvm is not None else np.full(len(result.t), np.nan)
    rows = zip(result.t, result.x, result.z, result.vx, result.vz, np.degrees(result.theta), dist)
    write_csv(path, SIMULATION_HEADER, rows, meta)


def write_vector_field(path, vx, vz, ax, az, meta=None):
    rows = zip(np.ravel(vx), np.ravel(vz), np.ravel(ax), np.ravel(az))
    write_csv(path, VECTOR_FIELD_HEADER, rows, meta)
