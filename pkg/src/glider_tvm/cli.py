"""Command-line front end: ``glider-tvm <subcommand> [options]``.

Every run validates its configuration first, writes its CSV artefacts, a
``manifest.json`` with the fully resolved configuration and a
``summary.json`` with results and provenance. A manifest can be passed
back through ``--config`` to reproduce a run. Angles on the command line
are in degrees.

On failure a JSON object ``{"error": ..., "field": ..., "message": ...}`` is
printed to stdout and the exit status is nonzero (2 for configuration
errors, 1 for computation errors).
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, export
from .dynamics import RTOL, ATOL, accel, integrate
from .equilibria import bifurcation_diagram, find_equilibria
from .errors import ConfigError, GliderError
from .manifold import BISECT_TOL, DOMAIN, N_POINTS, extended_tvm_surface, trace_tvm, vz_nullcline
from .profiles import BUILTIN_PROFILES, SymmetryClass, builtin, read_table_csv
from .repulsion import DEFAULT_GRID, DEFAULT_T, DEFAULT_VX, DEFAULT_VZ, GridSpec, repulsion_field, ridge_extract
from .scenarios import (
    FLUTTER_AMPLITUDE,
    FLUTTER_OMEGA,
    RAMP_DURATION,
    RAMP_END,
    RAMP_START,
    PitchSchedule,
    glide_stages,
    limit_cycle_check,
    simulate_controlled,
    tvm_adherence,
)

SUBCOMMANDS = ("phase-portrait", "equilibria", "bifurcation", "nullcline", "tvm", "repulsion", "tvm-surface",
               "simulate")

DEFAULTS = {
    "profile": "flat-plate",
    "table": None,
    "sym_rot180": False,
    "sym_topbottom": False,
    "sym_leftright": False,
    "extension": "clamp",
    "theta": -5.0,
    "theta_range": None,
    "domain": [DOMAIN[0], DOMAIN[1], DEFAULT_VZ[0], DEFAULT_VZ[1]],
    "grid": list(DEFAULT_GRID),
    "T": DEFAULT_T,
    "tol": BISECT_TOL,
    "rtol": RTOL,
    "atol": ATOL,
    "out": "out",
    "workers": 1,
    "seed": 0,
    "strategy": "A",
    "points": N_POINTS,
    "n_traj": 20,
    "t_end": None,
    "initial": [0.2, 0.0],
    "schedule": "sinusoid",
    "theta_mean": 0.0,
    "amplitude": math.degrees(FLUTTER_AMPLITUDE),
    "omega": FLUTTER_OMEGA,
    "phase": 0.0,
    "theta_start": math.degrees(RAMP_START),
    "theta_end": math.degrees(RAMP_END),
    "duration": RAMP_DURATION,
    "surface_step": 1.0,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="glider-tvm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("profile")
    g.add_argument("--profile", help=f"builtin profile ({', '.join(BUILTIN_PROFILES)}); default flat-plate")
    g.add_argument("--table", help="coefficient table CSV (alpha_deg,cl,cd)")
    g.add_argument("--sym-rot180", action="store_true", default=None, help="table has 180-degree rotational symmetry")
    g.add_argument("--sym-topbottom", action="store_true", default=None, help="table has top-bottom symmetry")
    g.add_argument("--sym-leftright", action="store_true", default=None, help="table has left-right symmetry")
    g.add_argument("--extension", choices=("clamp", "error"), help="policy for angles outside the table")
    r = common.add_argument_group("run")
    r.add_argument("--config", help="JSON config or manifest; command-line flags override it")
    r.add_argument("--theta", type=float, help="pitch angle in degrees (default -5)")
    r.add_argument("--theta-range", type=float, nargs=3, metavar=("A", "B", "N"), help="pitch grid in degrees")
    r.add_argument("--domain", type=float, nargs="+", metavar="V",
                   help="vx0 vx1 [vz0 vz1] (default -1.5 1.5 -2 0.5)")
    r.add_argument("--grid", type=int, nargs=2, metavar=("N", "M"), help="grid nodes in vx and vz")
    r.add_argument("--T", type=float, help="repulsion window (default -0.35)")
    r.add_argument("--tol", type=float, help="bisection tolerance (default 1e-10)")
    r.add_argument("--rtol", type=float, help="integrator relative tolerance")
    r.add_argument("--atol", type=float, help="integrator absolute tolerance")
    r.add_argument("--out", help="output directory (default ./out)")
    r.add_argument("--workers", type=int, help="parallel workers (results do not depend on it)")
    r.add_argument("--seed", type=int, help="seed for random test points")

    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    sub.required = True
    p = sub.add_parser("phase-portrait", parents=[common], help="vector field grid and sample trajectories")
    p.add_argument("--n-traj", type=int, help="number of random initial conditions")
    p.add_argument("--t-end", type=float, help="trajectory duration (default 10)")
    sub.add_parser("equilibria", parents=[common], help="equilibrium glides at one pitch")
    sub.add_parser("bifurcation", parents=[common], help="equilibria continued over a pitch range")
    sub.add_parser("nullcline", parents=[common], help="vz-nullcline at one pitch")
    p = sub.add_parser("tvm", parents=[common], help="terminal velocity manifold at one pitch")
    p.add_argument("--strategy", choices=("A", "B"))
    p.add_argument("--points", type=int, help="resampled points per curve (default 400)")
    sub.add_parser("repulsion", parents=[common], help="repulsion factor field and its ridge")
    p = sub.add_parser("tvm-surface", parents=[common], help="manifold slices stacked over a pitch range")
    p.add_argument("--strategy", choices=("A", "B"))
    p.add_argument("--points", type=int, help="resampled points per slice (default 400)")
    p = sub.add_parser("simulate", parents=[common], help="prescribed-pitch simulation")
    p.add_argument("--schedule", choices=("constant", "ramp", "sinusoid"))
    p.add_argument("--initial", type=float, nargs=2, metavar=("VX", "VZ"))
    p.add_argument("--t-end", type=float, help="duration (default 12 periods, ramp duration, or 30)")
    p.add_argument("--theta-mean", type=float, help="sinusoid mean pitch, degrees")
    p.add_argument("--amplitude", type=float, help="sinusoid amplitude, degrees (default 10)")
    p.add_argument("--omega", type=float, help="sinusoid angular frequency (default 0.5)")
    p.add_argument("--phase", type=float, help="sinusoid phase, radians")
    p.add_argument("--theta-start", type=float, help="ramp start, degrees (default -20)")
    p.add_argument("--theta-end", type=float, help="ramp end, degrees (default 20)")
    p.add_argument("--duration", type=float, help="ramp duration (default 30)")
    p.add_argument("--surface-step", type=float, help="pitch spacing of the adherence surface, degrees (default 1)")
    return parser


def resolve_config(args):
    """Merge defaults, an optional config file and explicit flags, then validate."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc}") from None
        loaded = loaded.get("config", loaded)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = list(value) if isinstance(value, (list, tuple)) else value
    validate(cfg, args.command)
    return cfg


def validate(cfg, command):
    if cfg["table"] is None and cfg["profile"] not in BUILTIN_PROFILES:
        raise ConfigError("profile", f"unknown profile {cfg['profile']!r}; choose from {sorted(BUILTIN_PROFILES)}")
    if cfg["table"] is not None and not Path(cfg["table"]).is_file():
        raise ConfigError("table", f"file not found: {cfg['table']}")
    if cfg["extension"] not in ("clamp", "error"):
        raise ConfigError("extension", "must be 'clamp' or 'error'")
    if not math.isfinite(cfg["theta"]):
        raise ConfigError("theta", "must be finite")
    d = cfg["domain"]
    if len(d) == 2:
        d = cfg["domain"] = [d[0], d[1], DEFAULTS["domain"][2], DEFAULTS["domain"][3]]
    if len(d) != 4 or not (d[0] < d[1] and d[2] < d[3]):
        raise ConfigError("domain", "expected vx0 < vx1 [vz0 < vz1]")
    if len(cfg["grid"]) != 2 or min(cfg["grid"]) < 1:
        raise ConfigError("grid", "expected two positive node counts")
    for key in ("tol", "rtol", "atol"):
        if not cfg[key] > 0:
            raise ConfigError(key, "must be positive")
    if cfg["workers"] < 1:
        raise ConfigError("workers", "must be at least 1")
    if cfg["points"] < 2:
        raise ConfigError("points", "must be at least 2")
    if cfg["strategy"] not in ("A", "B"):
        raise ConfigError("strategy", "must be 'A' or 'B'")
    if cfg["theta_range"] is not None:
        a, b, n = cfg["theta_range"]
        if n < 1 or n != int(n) or b < a:
            raise ConfigError("theta_range", "expected A <= B and a positive integer count N")
    elif command in ("bifurcation", "tvm-surface"):
        cfg["theta_range"] = [-45.0, 45.0, 91 if command == "bifurcation" else 19]
    if cfg["schedule"] not in ("constant", "ramp", "sinusoid"):
        raise ConfigError("schedule", "must be constant, ramp or sinusoid")
    if cfg["schedule"] == "sinusoid" and not cfg["omega"] > 0:
        raise ConfigError("omega", "must be positive")
    if cfg["schedule"] == "ramp" and not cfg["duration"] > 0:
        raise ConfigError("duration", "must be positive")
    if cfg["t_end"] is not None and not cfg["t_end"] > 0:
        raise ConfigError("t_end", "must be positive")
    if not cfg["surface_step"] > 0:
        raise ConfigError("surface_step", "must be positive")


def load_profile(cfg):
    if cfg["table"] is None:
        return builtin(cfg["profile"])
    sym = None
    if cfg["sym_rot180"] or cfg["sym_topbottom"] or cfg["sym_leftright"]:
        sym = SymmetryClass(bool(cfg["sym_rot180"]), bool(cfg["sym_topbottom"]), bool(cfg["sym_leftright"]))
    try:
        return read_table_csv(cfg["table"], symmetry=sym, extension=cfg["extension"])
    except GliderError as exc:
        raise ConfigError("table", str(exc)) from None


def theta_grid(cfg):
    a, b, n = cfg["theta_range"]
    return np.radians(np.linspace(a, b, int(n)))


def _eq_summary(e):
    return {"theta_deg": math.degrees(e.theta), "gamma_star_deg": math.degrees(e.gamma_star), "v_star": e.v_star,
            "vx": e.state.vx, "vz": e.state.vz, "delta": e.delta, "tau": e.tau, "kind": e.kind,
            "tangent": e.tangent, "eigenvalues": [[z.real, z.imag] for z in e.eigenvalues]}


# -- subcommands -------------------------------------------------------------


def cmd_phase_portrait(cfg, profile, out, meta):
    theta = math.radians(cfg["theta"])
    d = cfg["domain"]
    n, m = cfg["grid"]
    VX, VZ = np.meshgrid(np.linspace(d[0], d[1], n), np.linspace(d[2], d[3], m), indexing="ij")
    ax, az = accel(VX, VZ, theta, profile)
    export.write_vector_field(out / "vector_field.csv", VX, VZ, ax, az, meta)
    rng = np.random.default_rng(cfg["seed"])
    ics = np.column_stack([rng.uniform(d[0], d[1], cfg["n_traj"]), rng.uniform(d[2], d[3], cfg["n_traj"])])
    t_end = cfg["t_end"] or 10.0
    trajs = [integrate(x, theta, profile, (0.0, t_end), rtol=cfg["rtol"], atol=cfg["atol"]) for x in ics]
    export.write_trajectories(out / "trajectories.csv", trajs, meta)
    return {"files": ["vector_field.csv", "trajectories.csv"],
            "terminations": [t.termination for t in trajs],
            "equilibria": [_eq_summary(e) for e in find_equilibria(theta, profile, warn=False)]}


def cmd_equilibria(cfg, profile, out, meta):
    eqs = find_equilibria(math.radians(cfg["theta"]), profile)
    export.write_equilibria(out / "equilibria.csv", eqs, meta)
    return {"files": ["equilibria.csv"], "count": len(eqs), "equilibria": [_eq_summary(e) for e in eqs]}


def cmd_bifurcation(cfg, profile, out, meta):
    diagram = bifurcation_diagram(profile, theta_grid(cfg))
    export.write_bifurcation(out / "bifurcation.csv", diagram, meta)
    counts = [len(e) for e in diagram.per_theta]
    return {"files": ["bifurcation.csv"], "branches": len(diagram.branches),
            "terminations": [b.termination for b in diagram.branches],
            "count_range": [min(counts), max(counts)] if counts else None}


def cmd_nullcline(cfg, profile, out, meta):
    curve = vz_nullcline(math.radians(cfg["theta"]), profile)
    export.write_nullcline(out / "nullcline.csv", curve, meta)
    return {"files": ["nullcline.csv"], "points": len(curve.gamma),
            "singular_angles_deg": [math.degrees(s) for s in curve.singular_angles]}


def cmd_tvm(cfg, profile, out, meta):
    d = cfg["domain"]
    curve = trace_tvm(math.radians(cfg["theta"]), profile, (d[0], d[1]), strategy=cfg["strategy"],
                      n_points=cfg["points"], tol=cfg["tol"])
    export.write_tvm(out / "tvm.csv", curve, meta)
    return {"files": ["tvm.csv"], "points": len(curve), "spacing": curve.spacing,
            "equilibria": [_eq_summary(e) for e in curve.equilibria]}


def cmd_repulsion(cfg, profile, out, meta):
    d = cfg["domain"]
    grid = GridSpec((d[0], d[1]), (d[2], d[3]), tuple(cfg["grid"]))
    field = repulsion_field(grid, math.radians(cfg["theta"]), profile, cfg["T"], rtol=cfg["rtol"], atol=cfg["atol"],
                            workers=cfg["workers"])
    export.write_field(out / "repulsion.csv", field, meta)
    files = ["repulsion.csv"]
    summary = {"masked_escape": int(field.mask_escape.sum()), "masked_degenerate": int(field.mask_degenerate.sum())}
    if grid.shape[0] >= 2 and (~field.mask).any(axis=1).sum() >= 2:
        ridge = ridge_extract(field)
        export.write_csv(out / "ridge.csv", ["vx", "vz", "rho"], zip(ridge.vx, ridge.vz, ridge.value), meta)
        files.append("ridge.csv")
        summary["ridge_columns"] = int(ridge.valid.sum())
    summary["files"] = files
    return summary


def _surface(cfg, profile, thetas):
    d = cfg["domain"]
    return extended_tvm_surface(profile, thetas, (d[0], d[1]), workers=cfg["workers"], strategy=cfg["strategy"],
                                n_points=cfg["points"], tol=cfg["tol"])


def cmd_tvm_surface(cfg, profile, out, meta):
    surface = _surface(cfg, profile, theta_grid(cfg))
    export.write_surface(out / "tvm_surface.csv", surface, meta)
    return {"files": ["tvm_surface.csv"], "slices": len(surface.slices), "gaps_theta_deg":
            [math.degrees(t) for t in surface.gaps], "errors": {f"{math.degrees(k):.6g}": v
                                                               for k, v in surface.errors.items()}}


def make_schedule(cfg):
    if cfg["schedule"] == "constant":
        return PitchSchedule.constant(math.radians(cfg["theta"]))
    if cfg["schedule"] == "ramp":
        return PitchSchedule.linear_ramp(math.radians(cfg["theta_start"]), math.radians(cfg["theta_end"]),
                                         cfg["duration"])
    return PitchSchedule.sinusoid(math.radians(cfg["theta_mean"]), math.radians(cfg["amplitude"]), cfg["omega"],
                                  cfg["phase"])


def cmd_simulate(cfg, profile, out, meta):
    schedule = make_schedule(cfg)
    if cfg["t_end"] is not None:
        t_end = cfg["t_end"]
    elif schedule.kind == "sinusoid":
        t_end = 12 * schedule.period
    elif schedule.kind == "linear-ramp":
        t_end = schedule.params[2]
    else:
        t_end = 30.0
    result = simulate_controlled(cfg["initial"], schedule, profile, (0.0, t_end), rtol=cfg["rtol"], atol=cfg["atol"])
    lo, hi = (math.degrees(x) for x in schedule.theta_range)
    step = cfg["surface_step"]
    lo, hi = step * math.floor(lo / step), step * math.ceil(hi / step)
    thetas = np.radians(np.linspace(lo, hi, int(round((hi - lo) / step)) + 1))
    summary = {"schedule": schedule.as_dict(), "t_end": float(result.t[-1]),
               "termination": result.trajectory.termination}
    surface = _surface(cfg, profile, thetas)
    adherence = tvm_adherence(result, surface)
    summary["adherence"] = {"transient_end": adherence.transient_end, "max_distance": adherence.max_distance,
                            "mean_distance": adherence.mean_distance}
    if schedule.kind == "sinusoid" and not schedule.is_trivial and t_end >= 10 * schedule.period:
        lc = limit_cycle_check(result)
        summary["limit_cycle"] = {"converged": lc.converged, "return_distance": lc.return_distance,
                                  "diameter": lc.diameter}
    if schedule.kind == "linear-ramp":
        summary["stages"] = glide_stages(result)
    export.write_simulation(out / "simulation.csv", result, meta)
    summary["files"] = ["simulation.csv"]
    return summary


COMMANDS = {
    "phase-portrait": cmd_phase_portrait,
    "equilibria": cmd_equilibria,
    "bifurcation": cmd_bifurcation,
    "nullcline": cmd_nullcline,
    "tvm": cmd_tvm,
    "repulsion": cmd_repulsion,
    "tvm-surface": cmd_tvm_surface,
    "simulate": cmd_simulate,
}


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _error(kind, field, message, status):
    print(json.dumps({"error": kind, "field": field, "message": message}))
    return status


def run(command, cfg):
    """Execute ``command`` with a validated config; returns the summary dict."""
    profile = load_profile(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    meta = {"command": command, "profile": profile.name, "profile_hash": profile.fingerprint(),
            "version": __version__}
    manifest = {"command": command, "version": __version__, "config": cfg, "profile": profile.describe()}
    (out / "manifest.json").write_text(_dump(manifest) + "\n")
    start = time.perf_counter()
    summary = COMMANDS[command](cfg, profile, out, meta)
    summary["provenance"] = {
        "version": __version__,
        "profile": profile.describe(),
        "profile_hash": profile.fingerprint(),
        "tolerances": {"rtol": cfg["rtol"], "atol": cfg["atol"], "bisection": cfg["tol"]},
        "seconds": time.perf_counter() - start,
    }
    (out / "summary.json").write_text(_dump(summary) + "\n")
    return summary


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        return _error("ConfigError", exc.field, exc.message, 2)
    try:
        summary = run(args.command, cfg)
    except ConfigError as exc:
        return _error("ConfigError", exc.field, exc.message, 2)
    except (GliderError, ValueError) as exc:
        return _error(type(exc).__name__, None, str(exc), 1)
    print(_dump({"command": args.command, "out": str(cfg["out"]), "files": summary.get("files", [])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
