"""Equilibrium glides, their classification, and continuation over pitch.

Equilibria satisfy ``cot(gamma) = (CL/CD)(gamma + theta)`` on ``(0, pi)``,
i.e. they are zeros of ``h(gamma) = cot(gamma) - (CL/CD)(gamma + theta)``.
At a zero, ``dh/dgamma = -Delta`` with ``Delta = 1 + r^2 + r'`` for the
lift-to-drag ratio ``r``; ``Delta < 0`` marks a saddle.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dynamics import VelocityState, accel, jacobian
from .errors import CorrectorDivergence, DomainError, TangencyDetected

SCAN_POINTS = 2000
SCAN_MARGIN = 1e-4
ROOT_TOL = 1e-12
TANGENCY_TOL = 1e-8
CENTER_TOL = 1e-7


@dataclass(frozen=True)
class Equilibrium:
    """A fixed point of the velocity dynamics at pitch ``theta``."""

    theta: float
    gamma_star: float
    v_star: float
    state: VelocityState
    delta: float
    tau: float
    eigenvalues: tuple
    kind: str
    tangent: bool = False

    @property
    def is_stable(self):
        return self.kind in ("stable-node", "stable-focus")


@dataclass
class BifurcationBranch:
    """Equilibria along one continuation branch, in arclength order."""

    points: list
    arclength: np.ndarray
    termination: str = "range"
    branch_id: int = 0

    @property
    def theta(self):
        return np.array([p.theta for p in self.points])

    @property
    def gamma(self):
        return np.array([p.gamma_star for p in self.points])

    def __len__(self):
        return len(self.points)


@dataclass
class BifurcationDiagram:
    branches: list
    theta_grid: np.ndarray
    per_theta: list = field(default_factory=list)
    branch_of: list = field(default_factory=list)


def _h(gamma, theta, profile):
    r, _ = profile.ratio_and_derivative(gamma + theta)
    return np.cos(gamma) / np.sin(gamma) - r


def h(gamma, theta, profile):
    """Equilibrium residual ``cot(gamma) - (CL/CD)(gamma + theta)``."""
    if not 0.0 < gamma < math.pi:
        raise DomainError(f"gamma={gamma!r} is outside (0, pi)")
    return float(_h(gamma, theta, profile))


def dh_dgamma(gamma, theta, profile):
    """``-csc^2(gamma) - (CL/CD)'(gamma + theta)``."""
    if not 0.0 < gamma < math.pi:
        raise DomainError(f"gamma={gamma!r} is outside (0, pi)")
    _, rp = profile.ratio_and_derivative(gamma + theta)
    return float(-1.0 / math.sin(gamma) ** 2 - rp)


def delta_tau(gamma_star, theta, profile):
    """Classification quantities ``Delta = 1 + r^2 + r'`` and ``tau = CL'/CD + 3``."""
    alpha = gamma_star + theta
    r, rp = profile.ratio_and_derivative(alpha)
    _, cd = profile.coefficients(alpha)
    dcl, _ = profile.derivatives(alpha)
    return float(1.0 + r * r + rp), float(dcl / cd + 3.0)


def nullcline_speed(gamma, theta, profile):
    """Speed on the vz-nullcline, ``(CL cos g + CD sin g)^(-1/2)``; NaN where undefined."""
    cl, cd = profile.coefficients(np.asarray(gamma) + theta)
    denom = cl * np.cos(gamma) + cd * np.sin(gamma)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0.0, 1.0 / np.sqrt(np.where(denom > 0.0, denom, 1.0)), np.nan)


def classify_eigenvalues(eigenvalues, delta):
    lam = np.asarray(eigenvalues)
    if np.max(np.abs(lam)) < CENTER_TOL:
        return "degenerate"
    if np.min(np.abs(lam.real)) < CENTER_TOL:
        return "center"
    if delta < 0.0:
        return "saddle"
    complex_pair = bool(np.any(np.abs(lam.imag) > 0.0))
    stable = bool(np.all(lam.real < 0.0))
    if stable:
        return "stable-focus" if complex_pair else "stable-node"
    if np.all(lam.real > 0.0):
        return "unstable-focus" if complex_pair else "unstable-node"
    return "saddle"


def make_equilibrium(gamma_star, theta, profile, tangent=False):
    """Build a classified :class:`Equilibrium` from a root of ``h``."""
    v = float(nullcline_speed(gamma_star, theta, profile))
    state = VelocityState(v * math.cos(gamma_star), -v * math.sin(gamma_star))
    delta, tau = delta_tau(gamma_star, theta, profile)
    eig = np.linalg.eigvals(jacobian(state, theta, profile))
    eig = tuple(sorted((complex(e) for e in eig), key=lambda z: (z.real, z.imag)))
    return Equilibrium(
        float(theta), float(gamma_star), v, state, delta, tau, eig, classify_eigenvalues(eig, delta), tangent
    )


def _refine_root(f, a, b):
    return brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_equilibria(theta, profile, *, n_scan=SCAN_POINTS, margin=SCAN_MARGIN, warn=True):
    """All equilibria at pitch ``theta``, ordered by glide angle.

    A dense scan of ``h`` over ``(margin, pi - margin)`` brackets sign changes,
    which are refined with Brent's method. Grazing roots (``h`` and its
    derivative both vanishing) are detected separately, returned with
    ``tangent=True`` and reported with a :class:`TangencyDetected` warning.
    """
    gam = np.linspace(margin, math.pi - margin, n_scan)
    hv = _h(gam, theta, profile)
    f = lambda g: float(_h(g, theta, profile))  # noqa: E731

    roots = []
    for i in range(n_scan - 1):
        if hv[i] == 0.0:
            roots.append(gam[i])
        elif hv[i] * hv[i + 1] < 0.0:
            roots.append(_refine_root(f, gam[i], gam[i + 1]))
    # Touching roots produce no sign change: look at interior minima of |h|.
    ah = np.abs(hv)
    for i in range(1, n_scan - 1):
        if ah[i] <= ah[i - 1] and ah[i] <= ah[i + 1] and hv[i - 1] * hv[i + 1] > 0.0 and hv[i] != 0.0:
            if ah[i] > 1e-3:
                continue
            res = minimize_scalar(lambda g: abs(f(g)), bounds=(gam[i - 1], gam[i + 1]), method="bounded",
                                  options={"xatol": 1e-14})
            if abs(f(res.x)) < 1e-10 and all(abs(res.x - r) > 1e-6 for r in roots):
                roots.append(res.x)

    roots.sort()
    out = []
    for g in roots:
        slope = dh_dgamma(g, theta, profile)
        tangent = abs(slope) < TANGENCY_TOL
        if tangent and warn:
            warnings.warn(
                TangencyDetected(f"grazing root at gamma={math.degrees(g):.6f} deg, theta={math.degrees(theta):.6f} deg"),
                stacklevel=2,
            )
        out.append(make_equilibrium(g, theta, profile, tangent))
    return out


# -- continuation --------------------------------------------------------------


def _residual_grad(theta, gamma, profile):
    r, rp = profile.ratio_and_derivative(gamma + theta)
    s = math.sin(gamma)
    F = math.cos(gamma) / s - float(r)
    return F, np.array([-float(rp), -1.0 / (s * s) - float(rp)])


def _tangent(theta, gamma, profile):
    _, g = _residual_grad(theta, gamma, profile)
    t = np.array([g[1], -g[0]])
    return t / np.linalg.norm(t)


def _correct_at_theta(theta, gamma, profile, tol=ROOT_TOL, max_iter=50):
    for _ in range(max_iter):
        F, g = _residual_grad(theta, gamma, profile)
        if abs(F) < tol:
            return gamma
        step = F / g[1]
        gamma = min(max(gamma - step, 1e-12), math.pi - 1e-12)
    F, _ = _residual_grad(theta, gamma, profile)
    if abs(F) < tol:
        return gamma
    raise CorrectorDivergence(f"could not solve h=0 at theta={theta:g}")


def _walk(x0, direction, theta_lo, theta_hi, profile, ds0, ds_min, ds_max, max_points, tol):
    """Trace the zero set of h from ``x0`` in the sense given by ``direction``."""
    pts = [np.array(x0, dtype=float)]
    t_prev = _tangent(*x0, profile)
    if np.dot(t_prev, direction) < 0.0:
        t_prev = -t_prev
    ds = ds0
    reason = "max-points"
    while len(pts) < max_points:
        x = pts[-1]
        if len(pts) >= 2:
            sec = pts[-1] - pts[-2]
            t_pred = sec / np.linalg.norm(sec)
        else:
            t_pred = t_prev
        accepted = False
        while ds >= ds_min:
            xp = x + ds * t_pred
            y = xp.copy()
            ok = False
            for it in range(12):
                if not 0.0 < y[1] < math.pi:
                    break
                F, g = _residual_grad(y[0], y[1], profile)
                arc = np.dot(t_pred, y - xp)
                if abs(F) < tol and abs(arc) < 1e-12:
                    ok = True
                    break
                A = np.array([g, t_pred])
                try:
                    y = y - np.linalg.solve(A, np.array([F, arc]))
                except np.linalg.LinAlgError:
                    break
            t_new = _tangent(y[0], y[1], profile) if ok else None
            if ok and np.dot(t_new, t_pred) < 0.0:
                t_new = -t_new
            if ok and np.dot(t_new, t_pred) > 0.95:
                accepted = True
                break
            ds *= 0.5
        if not accepted:
            reason = "corrector-divergence"
            warnings.warn(CorrectorDivergence(f"continuation stopped at theta={x[0]:g}, gamma={x[1]:g}"), stacklevel=3)
            break
        if y[0] > theta_hi or y[0] < theta_lo:
            bound = theta_hi if y[0] > theta_hi else theta_lo
            w = (bound - x[0]) / (y[0] - x[0])
            guess = x[1] + w * (y[1] - x[1])
            pts.append(np.array([bound, _correct_at_theta(bound, guess, profile, tol)]))
            reason = "range"
            break
        pts.append(y)
        if len(pts) > 3 and np.linalg.norm(y - pts[0]) < 0.5 * ds:
            reason = "closed-loop"
            break
        ds = min(ds * (1.5 if it <= 3 else 1.0), ds_max)
    return pts, reason


def continue_branch(seed, theta_range, profile, *, ds=1e-2, ds_min=1e-4, ds_max=5e-2, max_points=20_000,
                    tol=ROOT_TOL, branch_id=0):
    """Pseudo-arclength continuation of the branch through ``seed`` over ``theta_range``.

    The branch is traced in both directions from the seed in the
    ``(theta, gamma)`` plane until it leaves ``theta_range`` (radians). Folds
    are traversed; steps adapt in ``[ds_min, ds_max]``.
    """
    lo, hi = float(min(theta_range)), float(max(theta_range))
    x0 = np.array([seed.theta, seed.gamma_star])
    # At a degenerate seed the tangent is vertical; the two walks must still
    # leave in opposite senses.
    t0 = _tangent(*x0, profile)
    if t0[0] < 0.0 or (t0[0] == 0.0 and t0[1] < 0.0):
        t0 = -t0
    fwd, r_fwd = _walk(x0, t0, lo, hi, profile, ds, ds_min, ds_max, max_points, tol)
    if r_fwd == "closed-loop":
        path, reason = fwd, r_fwd
    else:
        bwd, r_bwd = _walk(x0, -t0, lo, hi, profile, ds, ds_min, ds_max, max_points, tol)
        path = bwd[::-1] + fwd[1:]
        reason = r_fwd if r_fwd != "range" else r_bwd
    path = np.array(path)
    if path[-1, 0] < path[0, 0]:
        path = path[::-1]
    # Drop a duplicate seed when it sits exactly on the range boundary.
    keep = np.concatenate([[True], np.linalg.norm(np.diff(path, axis=0), axis=1) > 1e-14])
    path = path[keep]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))])
    points = [make_equilibrium(g, th, profile) for th, g in path]
    return BifurcationBranch(points, s, reason, branch_id)


def bifurcation_diagram(profile, theta_grid, **continuation):
    """Equilibria on a pitch grid plus continued branches through them.

    Every grid equilibrium not already on a traced branch seeds a new branch
    continued over the grid's range. ``branch_of[i][j]`` gives the branch id
    of the ``j``-th equilibrium at ``theta_grid[i]``.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    diagram = BifurcationDiagram([], theta_grid)
    if theta_grid.size == 0:
        return diagram
    rng = (float(theta_grid.min()), float(theta_grid.max()))
    for th in theta_grid:
        eqs = find_equilibria(float(th), profile, warn=False)
        ids = []
        for eq in eqs:
            owner = next((b.branch_id for b in diagram.branches if _on_branch(b, eq, profile)), None)
            if owner is None:
                owner = len(diagram.branches)
                if rng[0] < rng[1]:
                    branch = continue_branch(eq, rng, profile, branch_id=owner, **continuation)
                else:
                    branch = BifurcationBranch([eq], np.zeros(1), "range", owner)
                diagram.branches.append(branch)
            ids.append(owner)
        diagram.per_theta.append(eqs)
        diagram.branch_of.append(ids)
    return diagram


def _on_branch(branch, eq, profile, tol=1e-8):
    th, g = branch.theta, branch.gamma
    for i in range(len(th) - 1):
        a, b = th[i], th[i + 1]
        if not (min(a, b) - 1e-12 <= eq.theta <= max(a, b) + 1e-12):
            continue
        w = 0.0 if b == a else (eq.theta - a) / (b - a)
        guess = g[i] + w * (g[i + 1] - g[i])
        if abs(guess - eq.gamma_star) > 0.1:
            continue
        try:
            gs = _correct_at_theta(eq.theta, guess, profile)
        except CorrectorDivergence:
            continue
        if abs(gs - eq.gamma_star) < tol or _same_flat_root(gs, eq.gamma_star, eq.theta, profile):
            return True
    if len(th) == 1:
        return abs(th[0] - eq.theta) < 1e-14 and abs(g[0] - eq.gamma_star) < tol
    return False


def _same_flat_root(g1, g2, theta, profile, width=1e-3):
    # Near a degenerate root h is so flat that Newton stalls short of it;
    # two estimates belong to one root when h stays at roundoff level between them.
    if abs(g1 - g2) > width:
        return False
    vals = _h(np.linspace(g1, g2, 64), theta, profile)
    return bool(np.max(np.abs(vals)) < 10 * ROOT_TOL)


def accel_residual(eq, profile):
    """Norm of the acceleration at an equilibrium state (should be ~0)."""
    ax, az = accel(eq.state.vx, eq.state.vz, eq.theta, profile)
    return float(np.hypot(ax, az))
