"""The terminal velocity manifold (TVM) and the vz-nullcline.

The TVM at fixed pitch is found by bisection on the *origin* of
trajectories: a point is integrated backward in time and classified by
whether its vertical velocity runs off upward (it started above the
manifold) or downward (below). Bisection between an "above" and a "below"
point converges onto the manifold. The curve is then filled in either by
integrating bisected seeds forward (strategy ``"A"``) or by bisecting many
vertical slices (strategy ``"B"``).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _rk
from .dynamics import VelocityState, _field, accel, integrate_system, jacobian
from .equilibria import find_equilibria, nullcline_speed
from .errors import (
    EmptyBranch,
    IndeterminateEndpoint,
    InvalidBracket,
    NotASaddle,
    SeedNotFound,
)

ABOVE, BELOW, INDETERMINATE = 1, -1, 0
_LABELS = {ABOVE: "above", BELOW: "below", INDETERMINATE: "indeterminate"}

VZ_DECIDE = 3.0
T_BACK_MAX = 5.0
T_BACK_LIMIT = 80.0
BISECT_TOL = 1e-10
SEED_OFFSET = 0.5
SEED_BRACKET = (-4.0, 1.0)
SEED_HIGH_FALLBACK = (2.0, 3.0)
N_POINTS = 400
STEEP_SLOPE = 4.0
EQ_TOL = 1e-4
ARC_T_MAX = 60.0
DOMAIN = (-1.5, 1.5)


# -- nullcline ---------------------------------------------------------------


@dataclass
class NullclineCurve:
    theta: float
    gamma: np.ndarray
    v: np.ndarray
    vx: np.ndarray
    vz: np.ndarray
    singular_angles: list


def _nullcline_denominator(gamma, theta, profile):
    cl, cd = profile.coefficients(np.asarray(gamma) + theta)
    return cl * np.cos(gamma) + cd * np.sin(gamma)


def nullcline_singularities(theta, profile, n_scan=3600):
    """Glide angles in ``[0, 2 pi)`` where the nullcline denominator changes sign."""
    g = np.linspace(0.0, 2 * math.pi, n_scan + 1)
    d = _nullcline_denominator(g, theta, profile)
    f = lambda x: float(_nullcline_denominator(x, theta, profile))  # noqa: E731
    out = []
    for i in range(n_scan):
        if d[i] == 0.0:
            out.append(float(g[i]))
        elif d[i] * d[i + 1] < 0.0:
            out.append(brentq(f, g[i], g[i + 1], xtol=1e-15))
    # Exact zero at 0 and sign change straddling 2 pi.
    if d[n_scan] == 0.0 and (not out or out[0] > 1e-12):
        out.insert(0, 0.0)
    return sorted(set(round(x % (2 * math.pi), 15) for x in out))


def vz_nullcline(theta, profile, gamma_range=None, n=400, v_max=None):
    """Sample the vz-nullcline ``v = (CL cos g + CD sin g)^(-1/2)``.

    ``gamma_range`` defaults to the branch (between consecutive singular
    angles) that contains the first equilibrium. Samples where the
    denominator is not positive, or where the speed exceeds ``v_max``, are
    dropped.
    """
    sing = nullcline_singularities(theta, profile)
    if gamma_range is None:
        g_eq = find_equilibria(theta, profile, warn=False)[0].gamma_star
        bounds = sing + [s + 2 * math.pi for s in sing]
        lo = max([s for s in bounds if s < g_eq] or [g_eq - math.pi])
        hi = min([s for s in bounds if s > g_eq] or [g_eq + math.pi])
        margin = 1e-6 * (hi - lo)
        gamma_range = (lo + margin, hi - margin)
    g = np.linspace(gamma_range[0], gamma_range[1], n)
    v = nullcline_speed(g, theta, profile)
    ok = np.isfinite(v)
    if v_max is not None:
        ok &= v <= v_max
    if not ok.any():
        raise EmptyBranch(f"no valid nullcline points for gamma in {gamma_range}")
    g, v = g[ok], v[ok]
    return NullclineCurve(float(theta), g, v, v * np.cos(g), -v * np.sin(g), sing)


# -- origin classification and bisection -------------------------------------


def classify_batch(points, theta, profile, *, vz_decide=VZ_DECIDE, t_back_max=T_BACK_MAX, rtol=1e-8, atol=1e-10):
    """Backward-time origin of many points: ``+1`` above, ``-1`` below, ``0`` undecided."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)

    def stop(t, y):
        return np.abs(y[..., 1]).max(axis=-1) > vz_decide

    res = _rk.solve_batch(_field(theta, profile), pts, 0.0, -t_back_max, rtol=rtol, atol=atol, stop=stop)
    vz = res.y[:, 1]
    return np.where(vz > vz_decide, ABOVE, np.where(vz < -vz_decide, BELOW, INDETERMINATE))


def classify_origin(point, theta, profile, **options):
    """Classify where the trajectory through ``point`` came from.

    Returns ``"above"``, ``"below"`` or ``"indeterminate"`` (the backward
    trajectory never left ``|vz| <= vz_decide`` within ``t_back_max``).
    """
    vx, vz = (point.vx, point.vz) if isinstance(point, VelocityState) else point
    return _LABELS[int(classify_batch([[vx, vz]], theta, profile, **options)[0])]


def _classify_patient(points, theta, profile, t_back_max, t_back_limit, **options):
    # Points close to the manifold near an equilibrium separate slowly, so
    # undecided points are retried with a longer backward horizon.
    cls = classify_batch(points, theta, profile, t_back_max=t_back_max, **options)
    horizon = t_back_max
    while horizon < t_back_limit and np.any(cls == INDETERMINATE):
        horizon = min(2 * horizon, t_back_limit)
        idx = np.flatnonzero(cls == INDETERMINATE)
        cls[idx] = classify_batch(points[idx], theta, profile, t_back_max=horizon, **options)
    return cls


def bisect_segments(below, above, theta, profile, *, tol=BISECT_TOL, t_back_max=T_BACK_MAX,
                    t_back_limit=T_BACK_LIMIT, check_ends=True, **options):
    """Bisect many segments from a "below" point to an "above" point at once.

    Returns ``(points, ok)``; ``ok`` is False for segments whose endpoints did
    not classify as below/above. A midpoint that stays undecided even with
    the extended horizon is taken as lying on the manifold.
    """
    below = np.array(below, dtype=float).reshape(-1, 2)
    above = np.array(above, dtype=float).reshape(-1, 2)
    n = below.shape[0]
    ok = np.ones(n, dtype=bool)
    if check_ends:
        ends = _classify_patient(np.vstack([below, above]), theta, profile, t_back_max, t_back_max, **options)
        ok = (ends[:n] == BELOW) & (ends[n:] == ABOVE)
    lo, hi = below.copy(), above.copy()
    active = np.flatnonzero(ok & (np.linalg.norm(hi - lo, axis=1) >= tol))
    while active.size:
        mid = 0.5 * (lo[active] + hi[active])
        cls = _classify_patient(mid, theta, profile, t_back_max, t_back_limit, **options)
        up = cls == ABOVE
        down = cls == BELOW
        flat = cls == INDETERMINATE
        hi[active[up]] = mid[up]
        lo[active[down]] = mid[down]
        lo[active[flat]] = mid[flat]
        hi[active[flat]] = mid[flat]
        active = active[np.linalg.norm(hi[active] - lo[active], axis=1) >= tol]
    return 0.5 * (lo + hi), ok


def bisect_slice(vx_fixed, vz_bracket, theta, profile, tol=BISECT_TOL, **options):
    """Bisect the vertical line ``vx = vx_fixed`` for the manifold crossing.

    ``vz_bracket = (low, high)`` must classify as below and above.

    Raises
    ------
    IndeterminateEndpoint, InvalidBracket
    """
    low, high = float(vz_bracket[0]), float(vz_bracket[1])
    ends = np.array([[vx_fixed, low], [vx_fixed, high]])
    cls = classify_batch(ends, theta, profile)
    if np.any(cls == INDETERMINATE):
        raise IndeterminateEndpoint(f"bracket endpoint classification {[_LABELS[int(c)] for c in cls]}")
    if not (cls[0] == BELOW and cls[1] == ABOVE):
        raise InvalidBracket(f"bracket endpoints classify as {_LABELS[int(cls[0])]}/{_LABELS[int(cls[1])]}")
    pts, _ = bisect_segments(ends[:1], ends[1:], theta, profile, tol=tol, check_ends=False, **options)
    return VelocityState.from_array(pts[0])


# -- curves ------------------------------------------------------------------


@dataclass
class TvmCurve:
    """One slice of the terminal velocity manifold at pitch ``theta``.

    ``points`` are ordered left to right along the curve; ``accel_tangential``
    is the acceleration component along the unit tangent oriented in that
    direction.
    """

    theta: float
    points: np.ndarray
    accel_tangential: np.ndarray
    strategy: str = "A"
    equilibria: list = field(default_factory=list)
    raw: np.ndarray = field(default=None, repr=False)

    @property
    def vx(self):
        return self.points[:, 0]

    @property
    def vz(self):
        return self.points[:, 1]

    @property
    def spacing(self):
        return float(np.max(np.linalg.norm(np.diff(self.points, axis=0), axis=1))) if len(self.points) > 1 else 0.0

    def __len__(self):
        return len(self.points)


def _segment_projection(points, curve_points):
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    a = curve_points[:-1]
    b = curve_points[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    L2 = np.where(L2 == 0.0, 1.0, L2)
    ap = p[:, None, :] - a[None, :, :]
    s = np.clip(np.einsum("kij,ij->ki", ap, ab) / L2, 0.0, 1.0)
    proj = a[None] + s[..., None] * ab[None]
    d = np.linalg.norm(p[:, None, :] - proj, axis=2)
    return d, ab, ap


def distance_to_curve(point, curve):
    """Euclidean distance from ``point`` (or an array of points) to the polyline."""
    pts = curve.points if isinstance(curve, TvmCurve) else np.asarray(curve, dtype=float)
    single = isinstance(point, VelocityState) or np.ndim(point) == 1
    xy = [point.vx, point.vz] if isinstance(point, VelocityState) else point
    if len(pts) == 1:
        d = np.linalg.norm(np.asarray(xy, dtype=float).reshape(-1, 2) - pts[0], axis=1)
    else:
        d = _segment_projection(xy, pts)[0].min(axis=1)
    return float(d[0]) if single else d


def signed_offset(points, curve):
    """Distance to the curve, positive on the left of its direction (above for a left-to-right curve)."""
    pts = curve.points if isinstance(curve, TvmCurve) else np.asarray(curve, dtype=float)
    d, ab, ap = _segment_projection(points, pts)
    k = np.argmin(d, axis=1)
    rows = np.arange(d.shape[0])
    cross = ab[k, 0] * ap[rows, k, 1] - ab[k, 1] * ap[rows, k, 0]
    return np.where(cross >= 0.0, 1.0, -1.0) * d[rows, k]


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two polylines (vertex-to-polyline)."""
    pa = a.points if isinstance(a, TvmCurve) else np.asarray(a)
    pb = b.points if isinstance(b, TvmCurve) else np.asarray(b)
    return float(max(distance_to_curve(pa, pb).max(), distance_to_curve(pb, pa).max()))


def resample_arclength(points, n):
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0.0])
    pts = pts[keep]
    if len(pts) < 2:
        return pts
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    u = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(u, s, pts[:, 0]), np.interp(u, s, pts[:, 1])])


def _clip_vx(points, vx_lo, vx_hi):
    """Keep the part of the polyline between its first entry into and last exit from the vx band."""
    pts = np.asarray(points)
    inside = (pts[:, 0] >= vx_lo) & (pts[:, 0] <= vx_hi)
    if not inside.any():
        return pts[:0]
    i0, i1 = np.flatnonzero(inside)[[0, -1]]
    out = [pts[i0:i1 + 1]]
    for i, j, where in ((i0 - 1, i0, 0), (i1 + 1, i1, 1)):
        if 0 <= i < len(pts):
            a, b = pts[i], pts[j]
            edge = vx_lo if a[0] < vx_lo else vx_hi
            w = (edge - a[0]) / (b[0] - a[0])
            p = a + w * (b - a)
            out.insert(0 if where == 0 else len(out), p[None])
    return np.vstack(out)


def _pin_equilibria(points, eqs):
    # Move the nearest sample onto each equilibrium lying on the curve so the
    # resampled polyline passes through it exactly.
    pts = points.copy()
    if len(pts) < 2:
        return pts
    reach = 0.5 * np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    for e in eqs:
        q = e.state.as_array()
        k = int(np.argmin(np.linalg.norm(pts - q, axis=1)))
        if np.linalg.norm(pts[k] - q) < reach and distance_to_curve(q, pts) < 1e-3:
            pts[k] = q
    return pts


def tangential_acceleration(points, theta, profile):
    pts = np.asarray(points)
    if len(pts) < 2:
        return np.zeros(len(pts))
    tan = np.gradient(pts, axis=0)
    tan /= np.maximum(np.linalg.norm(tan, axis=1), 1e-300)[:, None]
    ax, az = accel(pts[:, 0], pts[:, 1], theta, profile)
    return ax * tan[:, 0] + az * tan[:, 1]


def _dense_path(traj, max_gap=1e-3):
    """Sample a trajectory's dense output finely enough for linear interpolation."""
    if traj.sol is None or len(traj.t) < 2:
        return traj.states
    pieces = [traj.states[:1]]
    for k in range(len(traj.t) - 1):
        gap = np.linalg.norm(traj.states[k + 1] - traj.states[k])
        m = max(1, int(math.ceil(gap / max_gap)))
        ts = np.linspace(traj.t[k], traj.t[k + 1], m + 1)[1:]
        pieces.append(traj.sol(ts)[:2].T)
    return np.vstack(pieces)


def _toward(eqs, tol):
    targets = np.array([[e.state.vx, e.state.vz] for e in eqs]) if eqs else np.zeros((0, 2))

    def stop(t, y):
        if not len(targets):
            return False
        return bool(np.min(np.hypot(targets[:, 0] - y[0], targets[:, 1] - y[1])) < tol)

    return stop


def _nearest_eq(point, eqs):
    d = [math.hypot(point[0] - e.state.vx, point[1] - e.state.vz) for e in eqs]
    i = int(np.argmin(d))
    return eqs[i], d[i]


def unstable_manifold_expansion(saddle, theta, profile, *, delta_seed=1e-6, t_max=ARC_T_MAX, eq_tol=EQ_TOL):
    """Forward-integrate both branches of a saddle's unstable manifold.

    Each arc starts at ``saddle.state +/- delta_seed * e_u`` (unit unstable
    eigenvector, the ``+`` arc first) and runs until it comes within
    ``eq_tol`` of a stable equilibrium, escapes, or reaches ``t_max``.
    """
    if saddle.kind != "saddle":
        raise NotASaddle(f"equilibrium kind is {saddle.kind!r}")
    J = jacobian(saddle.state, theta, profile)
    lam, vec = np.linalg.eig(J)
    i = int(np.argmax(lam.real))
    if not lam[i].real > 0.0:
        raise NotASaddle("no eigenvalue with positive real part")
    e = np.real(vec[:, i])
    e /= np.linalg.norm(e)
    if e[0] < 0.0:
        e = -e
    stable = [q for q in find_equilibria(theta, profile, warn=False) if q.is_stable or q.kind == "center"]
    x0 = saddle.state.as_array()
    arcs = []
    for sgn in (1.0, -1.0):
        arcs.append(integrate_system(x0 + sgn * delta_seed * e, theta, profile, (0.0, t_max),
                                     stop=_toward(stable, eq_tol)))
    return arcs[0], arcs[1]


def _seed_points(theta, profile, domain, tol, **options):
    vx = np.array([domain[0] - SEED_OFFSET, domain[1] + SEED_OFFSET])
    low = np.full(2, SEED_BRACKET[0])
    high = np.full(2, SEED_BRACKET[1])
    # At steep pitch the manifold climbs above the default bracket on one
    # side; widen the upper end there until it classifies as above.
    for top in SEED_HIGH_FALLBACK:
        cls = classify_batch(np.column_stack([vx, high]), theta, profile)
        retry = cls != ABOVE
        if not retry.any():
            break
        high[retry] = top
    pts, ok = bisect_segments(np.column_stack([vx, low]), np.column_stack([vx, high]), theta, profile, tol=tol,
                              **options)
    if not ok.all():
        raise SeedNotFound(f"no valid bracket vz in [{SEED_BRACKET[0]}, {SEED_HIGH_FALLBACK[-1]}] "
                           f"on seed slice(s) vx={vx[~ok].tolist()}")
    return pts


def _fill_gap(a, b, theta, profile, tol, n=12, **options):
    """Bisect slices between two nearby manifold points (used near slow equilibria)."""
    a, b = np.asarray(a), np.asarray(b)
    d = b - a
    L = np.linalg.norm(d)
    if L < 1e-3:
        return np.zeros((0, 2))
    normal = np.array([-d[1], d[0]]) / L
    if normal[1] < 0.0:
        normal = -normal
    w = np.linspace(0.0, 1.0, n + 2)[1:-1]
    centres = a[None] + w[:, None] * d[None]
    half = max(0.2 * L, 0.05)
    pts, ok = bisect_segments(centres - half * normal, centres + half * normal, theta, profile, tol=tol, **options)
    return pts[ok]


def _strategy_a(theta, profile, domain, tol, t_max, eq_tol, **options):
    eqs = find_equilibria(theta, profile, warn=False)
    attractors = [e for e in eqs if e.is_stable or e.kind in ("center", "degenerate")]
    seeds = _seed_points(theta, profile, domain, tol, **options)
    stop = _toward(attractors, eq_tol)

    def arc(x0):
        traj = integrate_system(x0, theta, profile, (0.0, t_max), stop=stop)
        path = _dense_path(traj)
        end_eq, dist = _nearest_eq(path[-1], attractors) if attractors else (None, np.inf)
        if end_eq is not None and dist > eq_tol:
            gap = _fill_gap(path[-1], end_eq.state.as_array(), theta, profile, tol, **options)
            if len(gap):
                order = np.argsort(np.linalg.norm(gap - path[-1], axis=1))
                path = np.vstack([path, gap[order]])
        if end_eq is not None:
            path = np.vstack([path, end_eq.state.as_array()])
        return path, end_eq

    left, eq_left = arc(seeds[0])
    right, eq_right = arc(seeds[1])
    pieces = [left]
    saddles = sorted((e for e in eqs if e.kind == "saddle"), key=lambda e: -e.gamma_star)
    for s in saddles:
        a1, a2 = unstable_manifold_expansion(s, theta, profile, t_max=t_max, eq_tol=eq_tol)
        p1, p2 = _dense_path(a1), _dense_path(a2)
        # The arc with the larger glide angle end heads left (vx decreasing).
        g1 = math.atan2(-p1[-1, 1], p1[-1, 0]) % (2 * math.pi)
        g2 = math.atan2(-p2[-1, 1], p2[-1, 0]) % (2 * math.pi)
        to_left, to_right = (p1, p2) if g1 > g2 else (p2, p1)
        pieces.append(to_left[::-1])
        pieces.append(to_right)
    pieces.append(right[::-1])
    return np.vstack(pieces), eqs


def _strategy_b(theta, profile, domain, tol, n_slices, **options):
    eqs = find_equilibria(theta, profile, warn=False)
    vx = np.linspace(domain[0], domain[1], n_slices)
    below = np.column_stack([vx, np.full(n_slices, SEED_BRACKET[0])])
    above = np.column_stack([vx, np.full(n_slices, SEED_BRACKET[1])])
    pts, ok = bisect_segments(below, above, theta, profile, tol=tol, **options)
    pts = pts[ok]
    if len(pts) == 0:
        raise SeedNotFound("no vertical slice bracketed the manifold")
    # Re-scan steep stretches with horizontal slices.
    extra = []
    for a, b in zip(pts[:-1], pts[1:]):
        dvx = b[0] - a[0]
        slope = abs(b[1] - a[1]) / dvx if dvx > 0 else np.inf
        if slope > STEEP_SLOPE:
            m = int(min(50, math.ceil(abs(b[1] - a[1]) / dvx)))
            vz = np.linspace(a[1], b[1], m + 2)[1:-1]
            left = np.column_stack([np.full(m, a[0]), vz])
            right = np.column_stack([np.full(m, b[0]), vz])
            cls = classify_batch(np.vstack([left, right]), theta, profile)
            lb = cls[:m] == BELOW
            lo = np.where(lb[:, None], left, right)
            hi = np.where(lb[:, None], right, left)
            hp, hok = bisect_segments(lo, hi, theta, profile, tol=tol, **options)
            extra.append(hp[hok])
    if extra:
        pts = np.vstack([pts] + extra)
        # Order along the curve by projecting onto the chord through neighbours.
        pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    return pts, eqs


def trace_tvm(theta, profile, domain=DOMAIN, *, strategy="A", n_points=N_POINTS, tol=BISECT_TOL, n_slices=61,
              t_max=ARC_T_MAX, eq_tol=EQ_TOL, clip=True, **options):
    """Compute the terminal velocity manifold at pitch ``theta`` over ``vx`` in ``domain``.

    Strategy ``"A"`` bisects one seed outside each side of the domain
    (``vx = edge -/+ 0.5``, ``vz`` bracket ``[-4, 1]``), integrates both
    forward onto the attracting equilibria and joins saddle unstable
    manifolds in between. Strategy ``"B"`` bisects ``n_slices`` vertical
    slices across the domain. The result is clipped to the domain and
    resampled to ``n_points`` points uniform in arclength.

    Raises
    ------
    SeedNotFound
    """
    if strategy == "A":
        raw, eqs = _strategy_a(theta, profile, domain, tol, t_max, eq_tol, **options)
    elif strategy == "B":
        raw, eqs = _strategy_b(theta, profile, domain, tol, n_slices, **options)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    path = _clip_vx(raw, domain[0], domain[1]) if clip else raw
    if len(path) < 2:
        raise SeedNotFound("manifold does not cross the requested domain")
    pts = _pin_equilibria(resample_arclength(path, n_points), eqs)
    return TvmCurve(float(theta), pts, tangential_acceleration(pts, theta, profile), strategy, eqs, raw)


# -- extended (theta-stacked) surface ----------------------------------------


@dataclass
class TvmSurface:
    thetas: np.ndarray
    slices: list
    errors: dict = field(default_factory=dict)

    def slice_at(self, theta):
        """Nearest computed slice to ``theta`` (gaps are skipped)."""
        ok = [i for i, s in enumerate(self.slices) if s is not None]
        i = min(ok, key=lambda j: abs(self.thetas[j] - theta))
        return self.slices[i]

    @property
    def gaps(self):
        return [float(t) for t, s in zip(self.thetas, self.slices) if s is None]


def extended_tvm_surface(profile, theta_grid, domain=DOMAIN, *, workers=1, **options):
    """Stack per-pitch manifold slices into a surface over ``(vx, vz, theta)``.

    Slices that fail are recorded in ``errors`` and left as ``None`` gaps.
    """
    thetas = np.sort(np.asarray(theta_grid, dtype=float))
    from .parallel import parallel_map

    results = parallel_map(_surface_slice, [(float(t), profile, tuple(domain), options) for t in thetas], workers)
    surface = TvmSurface(thetas, [])
    for t, (curve, err) in zip(thetas, results):
        surface.slices.append(curve)
        if err is not None:
            surface.errors[float(t)] = err
            warnings.warn(f"TVM slice at theta={math.degrees(t):.3f} deg failed: {err}", stacklevel=2)
    return surface


def _surface_slice(args):
    theta, profile, domain, options = args
    try:
        return trace_tvm(theta, profile, domain, **options), None
    except Exception as exc:  # noqa: BLE001 - per-slice failures become gaps
        return None, f"{type(exc).__name__}: {exc}"
