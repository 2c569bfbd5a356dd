"""Lift and drag coefficient profiles as functions of angle of attack.

Two kinds of profile are supported: analytic profiles defined by closed-form
callables (the flat plate is the canonical one) and tabulated profiles built
from measured ``(alpha, cl, cd)`` rows. Tabulated profiles are interpolated
with a monotone cubic Hermite (PCHIP) interpolant and extended around the
circle using the shape symmetries they declare.

Angles are radians everywhere in this module except at the table boundary
(:func:`load_table`, :func:`read_table_csv`), where they are degrees.
"""

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    InsufficientRows,
    NonMonotoneAlpha,
    NonPositiveDrag,
    OutOfMeasuredRange,
    ProfileError,
)

TWO_PI = 2.0 * math.pi
_FOLD_TOL = 1e-12
# Drag positivity is checked on a 0.1 degree grid over the full circle.
VALIDATION_STEP = math.radians(0.1)


@dataclass(frozen=True)
class SymmetryClass:
    """Shape symmetries and their consequences for the coefficients.

    ``rotational_180`` makes both coefficients pi-periodic, ``top_bottom``
    makes lift odd and drag even about alpha = 0 and ``left_right`` does the
    same about alpha = 90 degrees. Any two of the three imply the third, so
    instances are closed under that rule on construction.
    """

    rotational_180: bool = False
    top_bottom: bool = False
    left_right: bool = False

    def __post_init__(self):
        if self.rotational_180 + self.top_bottom + self.left_right >= 2:
            object.__setattr__(self, "rotational_180", True)
            object.__setattr__(self, "top_bottom", True)
            object.__setattr__(self, "left_right", True)

    @classmethod
    def full(cls):
        return cls(True, True, True)

    @property
    def period(self):
        return math.pi if self.rotational_180 else TWO_PI

    @property
    def any(self):
        return self.rotational_180 or self.top_bottom or self.left_right

    def fundamental_domain(self):
        """Smallest interval that the symmetry group maps onto the circle."""
        if self.top_bottom and self.left_right:
            return 0.0, math.pi / 2
        if self.top_bottom:
            return 0.0, math.pi
        if self.left_right:
            return -math.pi / 2, math.pi / 2
        if self.rotational_180:
            return 0.0, math.pi
        return 0.0, TWO_PI

    def images(self):
        """Affine maps ``alpha -> s*alpha + c`` (mod period) with lift sign ``s``."""
        maps = [(1.0, 0.0)]
        if self.top_bottom:
            maps.append((-1.0, 0.0))
        if self.left_right:
            maps.append((-1.0, math.pi))
        return maps

    def as_dict(self):
        return {
            "rotational_180": self.rotational_180,
            "top_bottom": self.top_bottom,
            "left_right": self.left_right,
        }


def fold_angles(alpha, symmetry, lo, hi):
    """Map angles into ``[lo, hi]`` with the symmetry images.

    Returns ``(folded, sign, reached)``; ``sign`` is the lift multiplier of the
    image used and ``reached`` is False where no image lands in the interval
    (those entries of ``folded`` are NaN).
    """
    alpha = np.asarray(alpha, dtype=float)
    period = symmetry.period
    folded = np.full(alpha.shape, np.nan)
    sign = np.ones(alpha.shape)
    reached = np.zeros(alpha.shape, dtype=bool)
    for s, c in symmetry.images():
        x = s * alpha + c
        k = np.ceil((lo - x) / period - _FOLD_TOL)
        x = x + k * period
        ok = (~reached) & (x <= hi + _FOLD_TOL)
        folded = np.where(ok, np.clip(x, lo, hi), folded)
        sign = np.where(ok, s, sign)
        reached |= ok
    return folded, sign, reached


def _clamp_angles(alpha, symmetry, lo, hi):
    """Nearest measured endpoint over all symmetry images (clamped extension)."""
    alpha = np.asarray(alpha, dtype=float)
    period = symmetry.period
    best = np.full(alpha.shape, np.inf)
    folded = np.full(alpha.shape, lo)
    sign = np.ones(alpha.shape)
    for s, c in symmetry.images():
        x = lo + np.mod(s * alpha + c - lo, period)
        d_hi = x - hi
        d_lo = lo + period - x
        d = np.minimum(d_hi, d_lo)
        end = np.where(d_hi <= d_lo, hi, lo)
        better = d < best
        best = np.where(better, d, best)
        folded = np.where(better, end, folded)
        sign = np.where(better, s, sign)
    return folded, sign


class CoefficientProfile:
    """Base class for lift/drag coefficient functions of angle of attack.

    Subclasses implement :meth:`_coefficients` and :meth:`_derivatives` on raw
    angles (radians, any real value, array-valued).
    """

    kind = "abstract"

    def __init__(self, name, symmetry):
        self.name = name
        self.symmetry = symmetry

    def coefficients(self, alpha):
        """Return ``(cl, cd)`` at ``alpha`` (radians, broadcastable)."""
        return self._coefficients(np.asarray(alpha, dtype=float))

    def derivatives(self, alpha):
        """Return ``(dcl/dalpha, dcd/dalpha)``."""
        return self._derivatives(np.asarray(alpha, dtype=float))

    def ratio_and_derivative(self, alpha):
        cl, cd = self.coefficients(alpha)
        dcl, dcd = self.derivatives(alpha)
        return cl / cd, (dcl * cd - cl * dcd) / (cd * cd)

    def canonical_angle(self, alpha):
        """Canonical representative of ``alpha`` in ``[0, period)``."""
        return np.mod(np.asarray(alpha, dtype=float), self.symmetry.period)

    def fingerprint(self):
        """Short hash of the coefficient values on a fixed grid."""
        grid = np.linspace(0.0, TWO_PI, 721)
        cl, cd = self.coefficients(grid)
        digest = hashlib.sha256(np.round(np.concatenate([cl, cd]), 12).tobytes())
        return digest.hexdigest()[:16]

    def describe(self):
        return {"name": self.name, "kind": self.kind, "symmetry": self.symmetry.as_dict()}

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"


class AnalyticProfile(CoefficientProfile):
    """Profile given by closed-form coefficient functions and their derivatives."""

    kind = "analytic"

    def __init__(self, name, cl, cd, dcl, dcd, symmetry=None):
        super().__init__(name, symmetry or SymmetryClass())
        self._cl, self._cd, self._dcl, self._dcd = cl, cd, dcl, dcd

    def _coefficients(self, alpha):
        return self._cl(alpha), self._cd(alpha)

    def _derivatives(self, alpha):
        return self._dcl(alpha), self._dcd(alpha)


def flat_plate():
    """Quasi-steady flat plate: ``cd = 1.4 - cos 2a``, ``cl = 1.2 sin 2a``."""
    profile = AnalyticProfile(
        "flat-plate",
        cl=lambda a: 1.2 * np.sin(2.0 * a),
        cd=lambda a: 1.4 - np.cos(2.0 * a),
        dcl=lambda a: 2.4 * np.cos(2.0 * a),
        dcd=lambda a: 2.0 * np.sin(2.0 * a),
        symmetry=SymmetryClass.full(),
    )
    profile.kind = "analytic-flat-plate"
    return profile


def scaled_plate(lift_gain=1.5, drag_offset=1.4, name=None):
    """Flat-plate shape functions with a different lift gain or drag offset.

    A lift gain above 1.2 makes the lift-to-drag ratio fall faster than
    ``-1`` through 90 degrees, which produces three equilibria near zero
    pitch. ``drag_offset`` must exceed 1 to keep drag positive.
    """
    if drag_offset <= 1.0:
        raise NonPositiveDrag(f"drag offset {drag_offset} gives non-positive drag")
    k, d = float(lift_gain), float(drag_offset)
    profile = AnalyticProfile(
        name or f"scaled-plate-{k:g}",
        cl=lambda a: k * np.sin(2.0 * a),
        cd=lambda a: d - np.cos(2.0 * a),
        dcl=lambda a: 2.0 * k * np.cos(2.0 * a),
        dcd=lambda a: 2.0 * np.sin(2.0 * a),
        symmetry=SymmetryClass.full(),
    )
    return profile


class TabulatedProfile(CoefficientProfile):
    """Profile interpolated from measured samples.

    Construct through :func:`load_table`. ``extension`` selects what happens at
    angles that no symmetry image maps into the measured range: ``"clamp"``
    holds the nearest end value (and sets ``uses_clamped_extension``),
    ``"error"`` raises :class:`OutOfMeasuredRange`.
    """

    kind = "tabulated"

    def __init__(self, name, alpha, cl, cd, symmetry, measured_range, extension="clamp"):
        super().__init__(name, symmetry)
        self.alpha = np.asarray(alpha, dtype=float)
        self.cl = np.asarray(cl, dtype=float)
        self.cd = np.asarray(cd, dtype=float)
        self.measured_range = (float(measured_range[0]), float(measured_range[1]))
        if extension not in ("clamp", "error"):
            raise ProfileError(f"unknown extension policy {extension!r}")
        self.extension = extension

        a, l, d = self._padded_samples()
        self._cl_interp = PchipInterpolator(a, l, extrapolate=True)
        self._cd_interp = PchipInterpolator(a, d, extrapolate=True)
        self._dcl_interp = self._cl_interp.derivative()
        self._dcd_interp = self._cd_interp.derivative()

        grid = np.arange(0.0, TWO_PI, VALIDATION_STEP)
        _, _, reached = fold_angles(grid, symmetry, *self.measured_range)
        self.uses_clamped_extension = not bool(reached.all())
        if self.uses_clamped_extension and extension == "error":
            self._validation_grid = grid[reached]
        else:
            self._validation_grid = grid
        cd_grid = self.coefficients(self._validation_grid)[1]
        if not np.all(cd_grid > 0.0):
            bad = self._validation_grid[np.argmin(cd_grid)]
            raise NonPositiveDrag(
                f"interpolated drag {cd_grid.min():.4g} <= 0 near alpha={math.degrees(bad):.1f} deg"
            )

    def _padded_samples(self):
        # Symmetry images of the samples just outside the stored range make the
        # interpolant C1 across fold boundaries.
        lo, hi = self.alpha[0], self.alpha[-1]
        spacing = np.max(np.diff(self.alpha))
        pad = 4.0 * spacing
        period = self.symmetry.period
        extra_a, extra_l, extra_d = [], [], []
        for s, c in self.symmetry.images():
            for k in (-2, -1, 0, 1, 2):
                x = s * self.alpha + c + k * period
                keep = ((x < lo - 1e-9) & (x >= lo - pad)) | ((x > hi + 1e-9) & (x <= hi + pad))
                extra_a.append(x[keep])
                extra_l.append(s * self.cl[keep])
                extra_d.append(self.cd[keep])
        a = np.concatenate([self.alpha] + extra_a)
        l = np.concatenate([self.cl] + extra_l)
        d = np.concatenate([self.cd] + extra_d)
        order = np.argsort(a, kind="stable")
        a, l, d = a[order], l[order], d[order]
        keep = np.concatenate([[True], np.diff(a) > 1e-9])
        return a[keep], l[keep], d[keep]

    def _fold(self, alpha):
        lo, hi = self.measured_range
        folded, sign, reached = fold_angles(alpha, self.symmetry, lo, hi)
        clamped = ~reached
        if clamped.any():
            if self.extension == "error":
                bad = np.asarray(alpha)[clamped].ravel()[0]
                raise OutOfMeasuredRange(
                    f"alpha={math.degrees(bad):.3f} deg is not reachable from the measured range"
                )
            cf, cs = _clamp_angles(alpha, self.symmetry, lo, hi)
            folded = np.where(clamped, cf, folded)
            sign = np.where(clamped, cs, sign)
        return folded, sign, clamped

    def _coefficients(self, alpha):
        folded, sign, _ = self._fold(alpha)
        return sign * self._cl_interp(folded), self._cd_interp(folded)

    def _derivatives(self, alpha):
        folded, sign, clamped = self._fold(alpha)
        # d(folded)/d(alpha) equals the lift sign for every symmetry image.
        dcl = self._dcl_interp(folded)
        dcd = sign * self._dcd_interp(folded)
        return np.where(clamped, 0.0, dcl), np.where(clamped, 0.0, dcd)

    def describe(self):
        info = super().describe()
        info["measured_range_deg"] = [math.degrees(x) for x in self.measured_range]
        info["rows"] = int(self.alpha.size)
        info["extension"] = self.extension
        info["uses_clamped_extension"] = self.uses_clamped_extension
        return info


def load_table(rows, symmetry=None, measured_range=None, *, extension="clamp", name="table"):
    """Build a tabulated profile from ``(alpha_deg, cl, cd)`` rows.

    Parameters
    ----------
    rows : sequence of (float, float, float)
        Samples with angle of attack in degrees, strictly increasing.
    symmetry : SymmetryClass, optional
        Declared shape symmetries used to extend the table around the circle.
    measured_range : (float, float), optional
        Degrees; defaults to the span of the rows and must lie inside it.
    extension : {"clamp", "error"}
        Policy for angles no symmetry image reaches.

    Raises
    ------
    InsufficientRows, NonMonotoneAlpha, NonPositiveDrag
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ProfileError("rows must be (alpha_deg, cl, cd) triples")
    if rows.shape[0] < 4:
        raise InsufficientRows(f"need at least 4 rows, got {rows.shape[0]}")
    if not np.all(np.isfinite(rows)):
        raise ProfileError("table contains non-finite values")
    alpha = np.radians(rows[:, 0])
    if not np.all(np.diff(alpha) > 0.0):
        raise NonMonotoneAlpha("alpha must be strictly increasing without duplicates")
    if not np.all(rows[:, 2] > 0.0):
        i = int(np.argmin(rows[:, 2]))
        raise NonPositiveDrag(f"row {i} has cd={rows[i, 2]:g} <= 0")
    if measured_range is None:
        rng = (alpha[0], alpha[-1])
    else:
        rng = tuple(math.radians(float(x)) for x in measured_range)
        if not (alpha[0] - 1e-12 <= rng[0] < rng[1] <= alpha[-1] + 1e-12):
            raise ProfileError("measured_range must lie within the tabulated angles")
    return TabulatedProfile(
        name, alpha, rows[:, 1], rows[:, 2], symmetry or SymmetryClass(), rng, extension=extension
    )


def tabulate(profile, step_deg, start_deg=0.0, stop_deg=None, *, symmetry=None, name=None):
    """Sample ``profile`` every ``step_deg`` degrees and rebuild it as a table.

    By default the samples cover one symmetry period, so the table carries
    the same symmetry declaration as the source profile.
    """
    symmetry = symmetry if symmetry is not None else profile.symmetry
    if stop_deg is None:
        stop_deg = start_deg + math.degrees(symmetry.period)
    deg = np.arange(start_deg, stop_deg + 0.5 * step_deg, step_deg)
    cl, cd = profile.coefficients(np.radians(deg))
    rows = np.column_stack([deg, cl, cd])
    return load_table(rows, symmetry, name=name or f"{profile.name}-table-{step_deg:g}deg")


def evaluate(profile, alpha):
    """Lift and drag coefficients at ``alpha`` (radians)."""
    return profile.coefficients(alpha)


def ratio_and_derivative(profile, alpha):
    """Lift-to-drag ratio and its derivative with respect to ``alpha``."""
    return profile.ratio_and_derivative(alpha)


def extend_by_symmetry(profile, alpha_raw):
    """Fold ``alpha_raw`` into the profile's stored domain.

    Returns ``(folded_alpha, lift_sign)``. The stored domain is the measured
    range for tables and the fundamental domain of the symmetry group for
    analytic profiles.

    Raises
    ------
    OutOfMeasuredRange
        If no chain of symmetry operations reaches the stored domain.
    """
    if isinstance(profile, TabulatedProfile):
        lo, hi = profile.measured_range
    else:
        lo, hi = profile.symmetry.fundamental_domain()
    folded, sign, reached = fold_angles(alpha_raw, profile.symmetry, lo, hi)
    if not np.all(reached):
        raise OutOfMeasuredRange(
            f"alpha={np.degrees(alpha_raw)} deg is outside the measured range and its symmetry images"
        )
    if np.ndim(folded) == 0:
        return float(folded), float(sign)
    return folded, sign


_TRUE = {"1", "true", "yes", "y", "on"}


def read_table_csv(path, *, symmetry=None, measured_range=None, extension="clamp", name=None):
    """Read a coefficient table file.

    The file is CSV with header ``alpha_deg,cl,cd``. Lines starting with
    ``#`` are comments; comments of the form ``# key: value`` provide metadata
    (``name``, ``rotational_180``, ``top_bottom``, ``left_right``,
    ``measured_range``). Explicit keyword arguments override the metadata.
    """
    meta = {}
    data_lines = []
    with open(path, newline="") as fh:
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                body = stripped.lstrip("#").strip()
                if ":" in body:
                    key, value = body.split(":", 1)
                    meta[key.strip().lower()] = value.strip()
                continue
            data_lines.append(stripped)
    reader = csv.DictReader(data_lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["alpha_deg", "cl", "cd"]:
        raise ProfileError(f"{path}: expected header 'alpha_deg,cl,cd'")
    rows = [(float(r["alpha_deg"]), float(r["cl"]), float(r["cd"])) for r in reader]

    if symmetry is None:
        symmetry = SymmetryClass(
            rotational_180=meta.get("rotational_180", "").lower() in _TRUE,
            top_bottom=meta.get("top_bottom", "").lower() in _TRUE,
            left_right=meta.get("left_right", "").lower() in _TRUE,
        )
    if measured_range is None and "measured_range" in meta:
        parts = meta["measured_range"].replace(",", " ").split()
        measured_range = (float(parts[0]), float(parts[1]))
    return load_table(
        rows, symmetry, measured_range, extension=extension, name=name or meta.get("name", str(path))
    )


def write_table_csv(path, profile, header_comments=True):
    """Write a tabulated profile in the format read by :func:`read_table_csv`."""
    with open(path, "w", newline="") as fh:
        if header_comments:
            fh.write(f"# name: {profile.name}\n")
            for key, value in profile.symmetry.as_dict().items():
                fh.write(f"# {key}: {str(value).lower()}\n")
            lo, hi = (math.degrees(x) for x in profile.measured_range)
            fh.write(f"# measured_range: {lo:.12g} {hi:.12g}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha_deg", "cl", "cd"])
        for a, l, d in zip(np.degrees(profile.alpha), profile.cl, profile.cd):
            writer.writerow([f"{a:.12g}", f"{l:.17g}", f"{d:.17g}"])


BUILTIN_PROFILES = {
    "flat-plate": flat_plate,
    "scaled-plate": scaled_plate,
}


def builtin(name):
    try:
        return BUILTIN_PROFILES[name]()
    except KeyError:
        raise ProfileError(f"unknown profile {name!r}; choose from {sorted(BUILTIN_PROFILES)}") from None
