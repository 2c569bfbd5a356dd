"""Trajectory-normal repulsion factor and ridge extraction.

For a window ``T`` the factor ``rho_T = <n_T, grad F_T n_0>`` measures how
much the flow stretches the direction normal to a trajectory. Computed in
backward time (``T < 0``) it peaks on the curve that attracts nearby
trajectories most strongly in forward time.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ATOL, RTOL, V_ESCAPE, _xy, accel, flow_map_gradient, flow_map_gradients
from .errors import DegenerateTangent, EmptyField
from .parallel import parallel_map

A_DEGENERATE = 1e-10
DEFAULT_T = -0.35
DEFAULT_GRID = (301, 301)
DEFAULT_VX = (-1.5, 1.5)
DEFAULT_VZ = (-2.0, 0.5)
CHUNK = 4096

ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _normals(vx, vz, theta, profile):
    ax, az = accel(np.asarray(vx, dtype=float), np.asarray(vz, dtype=float), theta, profile)
    norm = np.hypot(ax, az)
    safe = np.where(norm > A_DEGENERATE, norm, 1.0)
    return np.stack([-az / safe, ax / safe], axis=-1), norm > A_DEGENERATE


def normal_vector(state, theta, profile):
    """Unit normal to the flow: the acceleration rotated 90 degrees counterclockwise.

    Raises
    ------
    DegenerateTangent
        If ``|a| <= 1e-10`` (at or next to an equilibrium).
    """
    vx, vz = _xy(state)
    ax, az = accel(vx, vz, theta, profile)
    a = np.array([float(ax), float(az)])
    norm = math.hypot(*a)
    if not norm > A_DEGENERATE:
        raise DegenerateTangent(f"acceleration magnitude {norm:.3g} at ({float(vx):g}, {float(vz):g})")
    return ROT90 @ a / norm


def repulsion_factor(x0, theta, profile, T, *, method="variational", **options):
    """``rho_T`` at one point.

    Raises
    ------
    EscapeDuringWindow, DegenerateTangent
    """
    n0 = normal_vector(x0, theta, profile)
    xT, grad = flow_map_gradient(x0, theta, profile, T, method=method, **options)
    nT = normal_vector(xT, theta, profile)
    return float(nT @ grad @ n0)


@dataclass(frozen=True)
class GridSpec:
    vx_range: tuple = DEFAULT_VX
    vz_range: tuple = DEFAULT_VZ
    shape: tuple = DEFAULT_GRID

    @property
    def vx(self):
        return np.linspace(self.vx_range[0], self.vx_range[1], self.shape[0])

    @property
    def vz(self):
        return np.linspace(self.vz_range[0], self.vz_range[1], self.shape[1])

    @property
    def spacing(self):
        dvx = np.diff(self.vx_range)[0] / (self.shape[0] - 1) if self.shape[0] > 1 else 0.0
        dvz = np.diff(self.vz_range)[0] / (self.shape[1] - 1) if self.shape[1] > 1 else 0.0
        return float(dvx), float(dvz)


@dataclass
class RepulsionField:
    """``rho_T`` on a rectangular grid.

    ``values[i, j]`` belongs to ``(vx[i], vz[j])``. ``mask`` is True where
    the node escaped (``mask_escape``) or had a vanishing acceleration at
    either end of the window (``mask_degenerate``); masked values are NaN.
    """

    vx: np.ndarray
    vz: np.ndarray
    values: np.ndarray
    mask_escape: np.ndarray
    mask_degenerate: np.ndarray
    T: float
    theta: float

    @property
    def mask(self):
        return self.mask_escape | self.mask_degenerate


def _rho_chunk(args):
    pts, theta, profile, T, method, rtol, atol, v_escape = args
    n0, ok0 = _normals(pts[:, 0], pts[:, 1], theta, profile)
    final, grad, ok = flow_map_gradients(pts, theta, profile, T, method=method, rtol=rtol, atol=atol,
                                         v_escape=v_escape)
    nT, okT = _normals(final[:, 0], final[:, 1], theta, profile)
    rho = np.einsum("ni,nij,nj->n", nT, grad, n0)
    return rho, ~ok, ~(ok0 & okT)


def repulsion_at(points, theta, profile, T=DEFAULT_T, *, method="variational", rtol=RTOL, atol=ATOL,
                 v_escape=V_ESCAPE, workers=1):
    """``rho_T`` for an array of points; returns ``(rho, escaped, degenerate)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
    parts = parallel_map(_rho_chunk, [(c, theta, profile, T, method, rtol, atol, v_escape) for c in chunks], workers)
    if not parts:
        return np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0, dtype=bool)
    rho, esc, deg = (np.concatenate(x) for x in zip(*parts))
    rho = np.where(esc | deg, np.nan, rho)
    return rho, esc, deg & ~esc


def repulsion_field(grid=None, theta=0.0, profile=None, T=DEFAULT_T, **options):
    """Evaluate ``rho_T`` on every grid node.

    Every trajectory has its own step control, so values do not depend on
    chunking or on ``workers``.
    """
    grid = grid or GridSpec()
    vx, vz = grid.vx, grid.vz
    VX, VZ = np.meshgrid(vx, vz, indexing="ij")
    rho, esc, deg = repulsion_at(np.column_stack([VX.ravel(), VZ.ravel()]), theta, profile, T, **options)
    shape = VX.shape
    return RepulsionField(vx, vz, rho.reshape(shape), esc.reshape(shape), deg.reshape(shape), float(T), float(theta))


@dataclass
class Ridge:
    """Per-column maximum of a field; ``vz`` is NaN in gap columns."""

    vx: np.ndarray
    vz: np.ndarray
    value: np.ndarray

    @property
    def valid(self):
        return np.isfinite(self.vz)

    def polyline(self):
        return np.column_stack([self.vx[self.valid], self.vz[self.valid]])


def ridge_extract(field):
    """Argmax of each vx column with 3-point parabolic sub-cell refinement.

    Fully masked columns become gaps (NaN), never interpolated.

    Raises
    ------
    EmptyField
        If fewer than two columns hold an unmasked value.
    """
    values = np.where(field.mask, np.nan, field.values)
    usable = np.any(np.isfinite(values), axis=1)
    if usable.sum() < 2:
        raise EmptyField(f"{int(usable.sum())} unmasked column(s); need at least 2")
    vz = np.full(len(field.vx), np.nan)
    peak = np.full(len(field.vx), np.nan)
    dz = field.vz[1] - field.vz[0] if len(field.vz) > 1 else 0.0
    for i in np.flatnonzero(usable):
        col = values[i]
        j = int(np.nanargmax(col))
        z, p = field.vz[j], col[j]
        if 0 < j < len(col) - 1 and np.isfinite(col[j - 1]) and np.isfinite(col[j + 1]):
            y0, y1, y2 = col[j - 1], col[j], col[j + 1]
            curv = y0 - 2.0 * y1 + y2
            if curv < 0.0:
                off = 0.5 * (y0 - y2) / curv
                z = field.vz[j] + off * dz
                p = y1 - 0.25 * (y0 - y2) * off
        vz[i], peak[i] = z, p
    return Ridge(field.vx.copy(), vz, peak)


def normal_offsets(curve_points, offset):
    """Points displaced by ``+/- offset`` along the curve normal (for ridge checks)."""
    pts = np.asarray(curve_points, dtype=float)
    tan = np.gradient(pts, axis=0)
    tan /= np.linalg.norm(tan, axis=1)[:, None]
    nrm = tan @ ROT90.T
    return pts + offset * nrm, pts - offset * nrm

