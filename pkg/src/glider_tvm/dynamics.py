"""Nondimensional glider equations of motion and their flows.

State is the inertial velocity ``(vx, vz)`` with ``vz < 0`` meaning descent.
The glide angle ``gamma`` is measured clockwise from the horizontal, so
``vx = v cos(gamma)`` and ``vz = -v sin(gamma)``; the angle of attack is
``gamma + theta`` for pitch ``theta``. Right-hand sides are evaluated from
the polar quantities but in inertial coordinates, which stays regular at
``v = 0``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45
from scipy.integrate._ivp.common import OdeSolution

from . import _rk
from .errors import EscapeDuringWindow, NonPositiveDrag, NonPositiveParam, SingularAtZeroSpeed, StepSizeUnderflow

RTOL = 1e-8
ATOL = 1e-10
V_ESCAPE = 10.0
A_TOL = 1e-10
FIXED_POINT_WINDOW = 1.0
V_MIN = 1e-8
JAC_STEP = 1e-6
FD_STEP = 1e-6


@dataclass(frozen=True)
class VelocityState:
    vx: float
    vz: float

    @property
    def speed(self):
        return math.hypot(self.vx, self.vz)

    def to_polar(self):
        return PolarVelocity(self.speed, math.atan2(-self.vz, self.vx))

    def as_array(self):
        return np.array([self.vx, self.vz])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class PolarVelocity:
    v: float
    gamma: float

    def to_inertial(self):
        return VelocityState(self.v * math.cos(self.gamma), -self.v * math.sin(self.gamma))


@dataclass(frozen=True)
class DimensionalParams:
    """Dimensional glider parameters; ``S = c * s`` is the planform area."""

    m: float
    g: float
    rho: float
    c: float
    s: float

    @property
    def S(self):
        return self.c * self.s


@dataclass(frozen=True)
class Scaling:
    epsilon: float
    velocity_scale: float
    time_scale: float


def _xy(state):
    if isinstance(state, VelocityState):
        return state.vx, state.vz
    a = np.asarray(state, dtype=float)
    return a[..., 0], a[..., 1]


def accel(vx, vz, theta, profile):
    """Vectorised inertial acceleration ``(ax, az)`` from the polar form.

    ``ax = v^2 (CL sin g - CD cos g)``, ``az = v^2 (CL cos g + CD sin g) - 1``.
    At ``v = 0`` this returns ``(0, -1)`` exactly.
    """
    vx = np.asarray(vx, dtype=float)
    vz = np.asarray(vz, dtype=float)
    v2 = vx * vx + vz * vz
    gamma = np.arctan2(-vz, vx)
    cl, cd = profile.coefficients(gamma + theta)
    sg, cg = np.sin(gamma), np.cos(gamma)
    ax = v2 * (cl * sg - cd * cg)
    az = v2 * (cl * cg + cd * sg) - 1.0
    return ax, az


def acceleration(state, theta, profile):
    """Acceleration at ``state`` for fixed pitch ``theta`` (radians)."""
    ax, az = accel(*_xy(state), theta, profile)
    if np.ndim(ax) == 0:
        return float(ax), float(az)
    return ax, az


def acceleration_inertial_form(state, theta, profile):
    """Same field written as ``v (-CL vz - CD vx)``, ``v (CL vx - CD vz) - 1``.

    Algebraically identical to :func:`acceleration`; kept as an independent
    cross-check.
    """
    vx, vz = _xy(state)
    vx = np.asarray(vx, dtype=float)
    vz = np.asarray(vz, dtype=float)
    v = np.hypot(vx, vz)
    cl, cd = profile.coefficients(np.arctan2(-vz, vx) + theta)
    ax = v * (-cl * vz - cd * vx)
    az = v * (cl * vx - cd * vz) - 1.0
    if np.ndim(ax) == 0:
        return float(ax), float(az)
    return ax, az


def polar_rates(polar, theta, profile, v_min=V_MIN):
    """``(v_dot, gamma_dot)`` of the velocity-polar equations."""
    v, gamma = polar.v, polar.gamma
    if v <= v_min:
        raise SingularAtZeroSpeed(f"polar form is singular at v={v:g}")
    cl, cd = profile.coefficients(gamma + theta)
    v_dot = -cd * v * v + math.sin(gamma)
    gamma_dot = -cl * v + math.cos(gamma) / v
    return float(v_dot), float(gamma_dot)


def jacobian(state, theta, profile):
    """Central finite-difference Jacobian of the acceleration, ``[[dax/dvx, dax/dvz], [daz/dvx, daz/dvz]]``."""
    vx, vz = (float(x) for x in _xy(state))
    return _jacobian_batch(np.array([vx]), np.array([vz]), theta, profile)[0]


def _jacobian_batch(vx, vz, theta, profile):
    h = np.maximum(JAC_STEP, JAC_STEP * np.hypot(vx, vz))
    axp, azp = accel(vx + h, vz, theta, profile)
    axm, azm = accel(vx - h, vz, theta, profile)
    bxp, bzp = accel(vx, vz + h, theta, profile)
    bxm, bzm = accel(vx, vz - h, theta, profile)
    J = np.empty(vx.shape + (2, 2))
    J[..., 0, 0] = (axp - axm) / (2 * h)
    J[..., 1, 0] = (azp - azm) / (2 * h)
    J[..., 0, 1] = (bxp - bxm) / (2 * h)
    J[..., 1, 1] = (bzp - bzm) / (2 * h)
    return J


def epsilon_from_dimensional(p):
    """Glide scaling parameter ``eps = rho c S / (2 m)`` and unit scales.

    Returns a :class:`Scaling` with the velocity scale ``sqrt(g c / eps)`` and
    time scale ``sqrt(c / (g eps))``; multiply nondimensional results by these.
    """
    for name in ("m", "g", "rho", "c", "s"):
        value = getattr(p, name)
        if not (value > 0.0 and math.isfinite(value)):
            raise NonPositiveParam(f"{name} must be positive, got {value!r}")
    eps = p.rho * p.c * p.S / (2.0 * p.m)
    return Scaling(eps, math.sqrt(p.g * p.c / eps), math.sqrt(p.c / (p.g * eps)))


# -- single trajectories ---------------------------------------------------


@dataclass
class Trajectory:
    """Integrated trajectory with velocity, position and pitch samples.

    ``termination`` is one of ``"completed"``, ``"escaped"``, ``"stopped"``,
    ``"near-fixed-point"`` or ``"step-size-underflow"``.
    """

    t: np.ndarray
    states: np.ndarray
    positions: np.ndarray
    theta: np.ndarray
    termination: str
    sol: object = field(default=None, repr=False)
    message: str = ""

    @property
    def final(self):
        return VelocityState.from_array(self.states[-1])

    def __len__(self):
        return self.t.size


def _theta_fn(theta):
    if callable(theta):
        return theta
    value = float(theta)
    return lambda t: value


def integrate_system(
    initial,
    theta,
    profile,
    t_span,
    *,
    position=(0.0, 0.0),
    rtol=RTOL,
    atol=ATOL,
    v_escape=V_ESCAPE,
    a_tol=A_TOL,
    fixed_point_window=FIXED_POINT_WINDOW,
    max_step=np.inf,
    stop=None,
):
    """Integrate velocity and position with a fixed or time-varying pitch.

    ``theta`` is a float or a callable ``theta(t)``. The state integrated is
    ``(vx, vz, x, z)`` with ``x' = vx``, ``z' = vz``. ``stop(t, y)`` may end
    the run after any step (termination ``"stopped"``).
    """
    theta_of = _theta_fn(theta)
    vx0, vz0 = (float(v) for v in _xy(initial))
    t0, t1 = float(t_span[0]), float(t_span[1])
    y0 = np.array([vx0, vz0, float(position[0]), float(position[1])])

    if t1 == t0:
        return Trajectory(
            np.array([t0]), y0[None, :2].copy(), y0[None, 2:].copy(), np.array([theta_of(t0)]), "completed"
        )

    def rhs(t, y):
        ax, az = accel(y[0], y[1], theta_of(t), profile)
        return np.array([ax, az, y[0], y[1]])

    solver = RK45(rhs, t0, y0, t1, rtol=rtol, atol=atol, max_step=max_step)
    ts, ys, interps = [t0], [y0.copy()], []
    termination = "completed"
    message = ""
    quiet_since = None
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            termination = "step-size-underflow"
            message = msg or "step size underflow"
            warnings.warn(StepSizeUnderflow(f"integration stopped at t={solver.t:g}: {message}"), stacklevel=2)
            break
        ts.append(solver.t)
        ys.append(solver.y.copy())
        interps.append(solver.dense_output())
        vx, vz = solver.y[0], solver.y[1]
        if not (math.isfinite(vx) and math.isfinite(vz)) or math.hypot(vx, vz) > v_escape:
            termination = "escaped"
            break
        if stop is not None and stop(solver.t, solver.y):
            termination = "stopped"
            break
        ax, az = accel(vx, vz, theta_of(solver.t), profile)
        if math.hypot(ax, az) < a_tol:
            if quiet_since is None:
                quiet_since = solver.t
            elif abs(solver.t - quiet_since) >= fixed_point_window:
                termination = "near-fixed-point"
                break
        else:
            quiet_since = None

    t = np.array(ts)
    y = np.array(ys)
    sol = OdeSolution(t, interps) if interps else None
    return Trajectory(t, y[:, :2], y[:, 2:], np.array([theta_of(s) for s in t]), termination, sol, message)


def integrate(initial, theta, profile, t_span, **options):
    """Integrate the fixed-pitch dynamics from ``initial`` over ``t_span``.

    Adaptive Dormand-Prince 5(4) (``scipy.integrate.RK45``) with dense
    output. The run stops early with termination ``"escaped"`` once the speed
    exceeds ``v_escape`` and ``"near-fixed-point"`` once the acceleration
    norm stays below ``a_tol`` for ``fixed_point_window`` time units.
    """
    if callable(theta):
        raise TypeError("integrate takes a fixed pitch; use scenarios.simulate_controlled for schedules")
    return integrate_system(initial, float(theta), profile, t_span, **options)


def sample(trajectory, times):
    """Velocity states of a trajectory at ``times`` using its dense output."""
    if trajectory.sol is None:
        return np.repeat(trajectory.states[:1], np.size(times), axis=0)
    return trajectory.sol(np.asarray(times, dtype=float))[:2].T


# -- batched flows -----------------------------------------------------------


def _field(theta, profile):
    def fun(t, y):
        ax, az = accel(y[..., 0], y[..., 1], theta, profile)
        return np.stack([ax, az], axis=-1)

    return fun


def _escape_stop(v_escape):
    def stop(t, y):
        return ~np.all(np.hypot(y[..., 0], y[..., 1]) <= v_escape, axis=-1)

    return stop


def flow_batch(points, theta, profile, T, *, rtol=RTOL, atol=ATOL, v_escape=V_ESCAPE, stop=None):
    """Flow map of many points over duration ``T`` (sign gives direction).

    Returns ``(final, ok)`` where ``ok`` is False for trajectories that
    escaped or failed before reaching ``T``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    stop = stop or _escape_stop(v_escape)
    res = _rk.solve_batch(_field(theta, profile), pts, 0.0, T, rtol=rtol, atol=atol, stop=stop)
    return res.y, res.status == _rk.DONE


def flow_map_gradients(points, theta, profile, T, *, method="variational", rtol=RTOL, atol=ATOL, v_escape=V_ESCAPE):
    """Flow map and its gradient for many initial points.

    Parameters
    ----------
    points : array_like, shape (n, 2)
    method : {"variational", "finite-difference"}
        ``"variational"`` integrates ``Phi' = J Phi`` alongside the state with
        a finite-difference Jacobian; ``"finite-difference"`` differences four
        perturbed trajectories (step 1e-6) that share the centre's step
        sequence.

    Returns
    -------
    final : ndarray (n, 2)
    grad : ndarray (n, 2, 2)
    ok : ndarray of bool (n,)
        False where a trajectory escaped or the integrator failed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = pts.shape[0]
    if T == 0.0:
        return pts.copy(), np.broadcast_to(np.eye(2), (n, 2, 2)).copy(), np.ones(n, dtype=bool)
    stop = _escape_stop(v_escape)

    if method == "variational":

        def fun(t, y):
            vx, vz = y[..., 0], y[..., 1]
            ax, az = accel(vx, vz, theta, profile)
            J = _jacobian_batch(vx, vz, theta, profile)
            phi = y[..., 2:].reshape(y.shape[:-1] + (2, 2))
            dphi = np.matmul(J, phi).reshape(y.shape[:-1] + (4,))
            return np.concatenate([ax[..., None], az[..., None], dphi], axis=-1)

        def stop_v(t, y):
            return stop(t, y[..., :2])

        y0 = np.concatenate([pts, np.tile([1.0, 0.0, 0.0, 1.0], (n, 1))], axis=1)
        res = _rk.solve_batch(fun, y0, 0.0, T, rtol=rtol, atol=atol, stop=stop_v)
        final = res.y[:, :2]
        grad = res.y[:, 2:].reshape(n, 2, 2)
    elif method == "finite-difference":
        h = FD_STEP
        offsets = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
        y0 = pts[:, None, :] + offsets[None, :, :]
        res = _rk.solve_batch(_field(theta, profile), y0, 0.0, T, rtol=rtol, atol=atol, stop=stop)
        y = res.y
        final = y[:, 0]
        grad = np.empty((n, 2, 2))
        grad[:, :, 0] = (y[:, 1] - y[:, 2]) / (2 * h)
        grad[:, :, 1] = (y[:, 3] - y[:, 4]) / (2 * h)
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    return final, grad, res.status == _rk.DONE


def flow_map_gradient(x0, theta, profile, T, *, method="variational", **options):
    """Flow map ``F_T(x0)`` and gradient ``dF_T/dx0`` for one point.

    Raises
    ------
    EscapeDuringWindow
        If the trajectory leaves the escape radius before ``T``.
    """
    vx, vz = (float(v) for v in _xy(x0))
    final, grad, ok = flow_map_gradients([[vx, vz]], theta, profile, T, method=method, **options)
    if not ok[0]:
        raise EscapeDuringWindow(f"trajectory from ({vx:g}, {vz:g}) escaped within T={T:g}")
    return VelocityState.from_array(final[0]), grad[0]


# -- one-dimensional vertical descent --------------------------------------


def terminal_velocity_1d(cd):
    """Terminal speed ``sqrt(1/cd)`` of the vertical model ``vz' = cd vz^2 - 1``."""
    if not cd > 0.0:
        raise NonPositiveDrag(f"drag coefficient must be positive, got {cd!r}")
    return math.sqrt(1.0 / cd)


def descent_1d(cd, vz0=0.0, t_end=50.0, *, rtol=1e-12, atol=1e-300):
    """Integrate the one-dimensional descent model and return ``(t, vz)``.

    The deviation ``u = vz + sqrt(1/cd)`` is integrated instead of ``vz``
    (``u' = cd u (u - 2 sqrt(1/cd))``), which avoids cancellation next to the
    fixed point and keeps the computed approach monotone.
    """
    vt = terminal_velocity_1d(cd)
    solver = RK45(lambda t, u: cd * u * (u - 2.0 * vt), 0.0, np.array([float(vz0) + vt]), t_end,
                  rtol=rtol, atol=atol)
    ts, us = [0.0], [float(vz0) + vt]
    while solver.status == "running":
        solver.step()
        ts.append(solver.t)
        us.append(float(solver.y[0]))
    return np.array(ts), np.array(us) - vt
