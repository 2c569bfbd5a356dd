"""Prescribed-pitch simulations and their relation to the extended manifold.

The pitch is a known function of time injected into the velocity dynamics;
no pitching moment is modelled. Position is integrated alongside velocity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import integrate_system
from .errors import NotPeriodicSchedule, ThetaOutOfSurfaceRange
from .manifold import distance_to_curve

FLUTTER_AMPLITUDE = math.radians(10.0)
FLUTTER_OMEGA = 0.5
RAMP_START = math.radians(-20.0)
RAMP_END = math.radians(20.0)
RAMP_DURATION = 30.0
SAMPLE_DT = 0.05
TRANSIENT_DISTANCE = 0.05
RETURN_TOL = 1e-3


@dataclass(frozen=True)
class PitchSchedule:
    """Pitch as a function of time, in radians.

    Use the :meth:`constant`, :meth:`linear_ramp` and :meth:`sinusoid`
    constructors. A ramp holds its end value after ``duration``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind == "constant":
            if len(self.params) != 1:
                raise ValueError("constant schedule takes (theta0,)")
        elif self.kind == "linear-ramp":
            if len(self.params) != 3 or not self.params[2] > 0:
                raise ValueError("linear-ramp needs (theta_start, theta_end, duration) with duration > 0")
        elif self.kind == "sinusoid":
            if len(self.params) != 4 or not self.params[2] > 0:
                raise ValueError("sinusoid needs (theta_mean, amplitude, omega, phase) with omega > 0")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, theta0):
        return cls("constant", (float(theta0),))

    @classmethod
    def linear_ramp(cls, theta_start=RAMP_START, theta_end=RAMP_END, duration=RAMP_DURATION):
        return cls("linear-ramp", (float(theta_start), float(theta_end), float(duration)))

    @classmethod
    def sinusoid(cls, theta_mean=0.0, amplitude=FLUTTER_AMPLITUDE, omega=FLUTTER_OMEGA, phase=0.0):
        return cls("sinusoid", (float(theta_mean), float(amplitude), float(omega), float(phase)))

    def __call__(self, t):
        if self.kind == "constant":
            return self.params[0] + 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else self.params[0]
        if self.kind == "linear-ramp":
            a, b, d = self.params
            return a + (b - a) * np.clip(np.asarray(t, dtype=float) / d, 0.0, 1.0)
        mean, amp, omega, phase = self.params
        return mean + amp * np.sin(omega * np.asarray(t, dtype=float) + phase)

    @property
    def is_trivial(self):
        """True when the schedule never changes (zero amplitude or slope)."""
        if self.kind == "constant":
            return True
        if self.kind == "linear-ramp":
            return self.params[0] == self.params[1]
        return self.params[1] == 0.0

    @property
    def period(self):
        if self.kind != "sinusoid":
            raise NotPeriodicSchedule(f"{self.kind} schedule has no period")
        return 2.0 * math.pi / self.params[2]

    @property
    def theta_range(self):
        if self.kind == "constant":
            return self.params[0], self.params[0]
        if self.kind == "linear-ramp":
            return min(self.params[:2]), max(self.params[:2])
        mean, amp = self.params[:2]
        return mean - abs(amp), mean + abs(amp)

    def as_dict(self):
        names = {
            "constant": ("theta0",),
            "linear-ramp": ("theta_start", "theta_end", "duration"),
            "sinusoid": ("theta_mean", "amplitude", "omega", "phase"),
        }[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.params))}


@dataclass
class SimulationResult:
    """Uniformly sampled simulation output.

    ``trajectory`` keeps the solver steps and dense output.
    """

    t: np.ndarray
    x: np.ndarray
    z: np.ndarray
    vx: np.ndarray
    vz: np.ndarray
    theta: np.ndarray
    schedule: PitchSchedule
    trajectory: object = field(repr=False, default=None)
    dist_tvm: np.ndarray = None

    @property
    def speed(self):
        return np.hypot(self.vx, self.vz)

    @property
    def glide_angle(self):
        return np.arctan2(-self.vz, self.vx)

    @property
    def velocities(self):
        return np.column_stack([self.vx, self.vz])

    def velocity_at(self, times):
        return self.trajectory.sol(np.asarray(times, dtype=float))[:2].T


def simulate_controlled(initial, schedule, profile, t_span, *, dt=SAMPLE_DT, position=(0.0, 0.0), **options):
    """Integrate velocity and position with the pitch following ``schedule``.

    A constant schedule runs exactly the fixed-pitch integration. For a
    varying schedule the near-fixed-point stop is disabled unless
    ``fixed_point_window`` is passed explicitly.
    """
    if schedule.kind == "constant":
        theta = schedule.params[0]
    else:
        theta = lambda t: float(schedule(t))  # noqa: E731
        options.setdefault("fixed_point_window", math.inf)
    traj = integrate_system(initial, theta, profile, t_span, position=position, **options)
    t_end = traj.t[-1]
    n = int(math.floor((t_end - traj.t[0]) / dt + 1e-9)) + 1
    t = traj.t[0] + dt * np.arange(n)
    if traj.sol is None:
        y = np.repeat(np.concatenate([traj.states[:1], traj.positions[:1]], axis=1), n, axis=0)
    else:
        y = traj.sol(t).T
    return SimulationResult(t, y[:, 2], y[:, 3], y[:, 0], y[:, 1], np.asarray(schedule(t), dtype=float) * np.ones(n),
                            schedule, traj)


@dataclass
class LimitCycle:
    converged: bool
    return_distance: float
    loop: np.ndarray
    returns: np.ndarray

    @property
    def diameter(self):
        diff = self.loop[:, None, :] - self.loop[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())


def limit_cycle_check(result, schedule=None, *, tol=RETURN_TOL, min_periods=10):
    """Stroboscopic return map of a periodically forced run.

    The velocity is sampled once per forcing period; the run has converged
    when the last two returns differ by less than ``tol``. ``loop`` is the
    path over the final period.

    Raises
    ------
    NotPeriodicSchedule
    """
    schedule = schedule or result.schedule
    if schedule.kind != "sinusoid" or schedule.is_trivial:
        raise NotPeriodicSchedule(f"{schedule.kind} schedule is not periodic forcing")
    period = schedule.period
    t0, t1 = result.trajectory.t[0], result.trajectory.t[-1]
    k = int(math.floor((t1 - t0) / period + 1e-9))
    if k < min_periods:
        raise ValueError(f"run spans {k} forcing periods; need at least {min_periods}")
    strobe = t0 + period * np.arange(k + 1)
    returns = result.velocity_at(strobe)
    gap = float(np.linalg.norm(returns[-1] - returns[-2]))
    loop = result.velocity_at(np.linspace(strobe[-2], strobe[-1], 400))
    return LimitCycle(gap < tol, gap, loop, returns)


@dataclass
class Adherence:
    distances: np.ndarray
    transient_end: float
    max_distance: float
    mean_distance: float


def surface_distances(result, surface):
    """Distance of each sample to the surface slice at the nearest pitch.

    Raises
    ------
    ThetaOutOfSurfaceRange
    """
    ok = [i for i, s in enumerate(surface.slices) if s is not None]
    thetas = surface.thetas[ok]
    half = 0.5 * (np.max(np.diff(thetas)) if len(thetas) > 1 else 0.0) + 1e-12
    lo, hi = float(np.min(result.theta)), float(np.max(result.theta))
    if lo < thetas[0] - half or hi > thetas[-1] + half:
        raise ThetaOutOfSurfaceRange(
            f"run visits theta in [{math.degrees(lo):.3f}, {math.degrees(hi):.3f}] deg; surface covers "
            f"[{math.degrees(thetas[0]):.3f}, {math.degrees(thetas[-1]):.3f}] deg"
        )
    nearest = np.argmin(np.abs(result.theta[:, None] - thetas[None, :]), axis=1)
    dist = np.empty(len(result.t))
    for j in np.unique(nearest):
        sel = nearest == j
        dist[sel] = distance_to_curve(result.velocities[sel], surface.slices[ok[j]])
    return dist


def tvm_adherence(result, surface, *, transient_distance=TRANSIENT_DISTANCE):
    """Post-transient distance statistics to the extended manifold.

    The transient ends at the first sample closer than ``transient_distance``.
    """
    dist = surface_distances(result, surface)
    result.dist_tvm = dist
    hit = np.flatnonzero(dist < transient_distance)
    if not hit.size:
        return Adherence(dist, math.inf, math.inf, math.inf)
    tail = dist[hit[0]:]
    return Adherence(dist, float(result.t[hit[0]]), float(tail.max()), float(tail.mean()))


def _longest_run(flags):
    best, start, cur = (0, 0), None, 0
    for k, f in enumerate(np.append(flags, False)):
        if f and start is None:
            start = k
        elif not f and start is not None:
            if k - start > best[1] - best[0]:
                best = (start, k)
            start = None
    return best


def glide_stages(result, min_duration=1.0):
    """Locate the three stages of a pitch-up glide.

    1. acceleration: speed rises to its first peak;
    2. shallowing: the glide angle falls to its minimum after the peak;
    3. deceleration: the longest stretch after the peak where ``|vx|`` and
       ``|vz|`` both decrease.

    ``ordered`` is True when speed gains before the peak, the shallowest
    glide follows the peak, and the deceleration lasts at least
    ``min_duration`` and runs on past the shallowest glide.
    """
    speed = result.speed
    rising = np.diff(speed) > 0
    k = int(np.argmin(rising)) if not rising.all() else len(speed) - 1
    t_peak = float(result.t[k])
    gamma = result.glide_angle
    j = k + int(np.argmin(gamma[k:]))
    t_shallow = float(result.t[j])
    both = (np.diff(np.abs(result.vx[k:])) < 0) & (np.diff(np.abs(result.vz[k:])) < 0)
    a, b = _longest_run(both)
    t_dec = (float(result.t[k + a]), float(result.t[k + b]))
    ordered = bool(
        speed[k] > speed[0] and t_peak <= t_shallow < t_dec[1] and t_dec[1] - t_dec[0] >= min_duration
    )
    return {
        "t_peak": t_peak,
        "speed_gain": float(speed[k] - speed[0]),
        "t_shallowest": t_shallow,
        "deceleration": t_dec,
        "ordered": ordered,
    }
