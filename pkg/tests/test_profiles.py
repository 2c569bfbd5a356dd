import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glider_tvm import profiles
from glider_tvm.errors import InsufficientRows, NonMonotoneAlpha, NonPositiveDrag, OutOfMeasuredRange, ProfileError
from glider_tvm.profiles import SymmetryClass, extend_by_symmetry, load_table, tabulate

from synthetic import SYNTHETIC_TABLES

angles = st.floats(-20.0, 20.0, allow_nan=False)
DEG = math.radians


@pytest.mark.parametrize("deg, cl, cd", [(0, 0.0, 0.4), (45, 1.2, 1.4), (90, 0.0, 2.4), (30, 1.2 * math.sin(DEG(60)), None)])
def test_flat_plate_values(plate, deg, cl, cd):
    got_cl, got_cd = profiles.evaluate(plate, DEG(deg))
    assert got_cl == pytest.approx(cl, abs=1e-12)
    if cd is not None:
        assert got_cd == pytest.approx(cd, abs=1e-12)


def test_flat_plate_symmetry_flags(plate):
    s = plate.symmetry
    assert s.rotational_180 and s.top_bottom and s.left_right
    assert s.period == pytest.approx(math.pi)


def test_two_symmetries_imply_third():
    s = SymmetryClass(top_bottom=True, left_right=True)
    assert s.rotational_180


@given(angles)
def test_flat_plate_symmetry_relations(a):
    p = profiles.flat_plate()
    c = lambda x: p.coefficients(x)  # noqa: E731
    assert c(a)[0] == pytest.approx(-c(-a)[0], abs=1e-12)
    assert c(a)[1] == pytest.approx(c(-a)[1], abs=1e-12)
    assert c(a)[0] == pytest.approx(c(a + math.pi)[0], abs=1e-12)
    assert c(a)[1] == pytest.approx(c(a + math.pi)[1], abs=1e-12)
    h = math.pi / 2
    assert c(h + a)[0] == pytest.approx(-c(h - a)[0], abs=1e-12)
    assert c(h + a)[1] == pytest.approx(c(h - a)[1], abs=1e-12)


def test_ratio_and_derivative_values(plate):
    r, dr = profiles.ratio_and_derivative(plate, math.pi / 2)
    assert r == pytest.approx(0.0, abs=1e-15)
    assert dr == pytest.approx(-1.0, abs=1e-12)
    r, _ = profiles.ratio_and_derivative(plate, math.pi / 4)
    assert r == pytest.approx(1.2 / 1.4, rel=1e-12)


@pytest.mark.parametrize("make", [profiles.flat_plate, *SYNTHETIC_TABLES.values()])
def test_ratio_derivative_matches_finite_difference(make):
    p = make()
    rng = np.random.default_rng(3)
    alpha = rng.uniform(0, 2 * math.pi, 100)
    if isinstance(p, profiles.TabulatedProfile):
        # keep away from knots where the interpolant's second derivative jumps
        knots = np.concatenate([p.alpha + k * math.pi for k in range(-2, 4)])
        alpha = alpha[np.min(np.abs(alpha[:, None] - knots[None, :]), axis=1) > 1e-4]
    r, dr = p.ratio_and_derivative(alpha)
    h = 1e-5
    fd = (p.ratio_and_derivative(alpha + h)[0] - p.ratio_and_derivative(alpha - h)[0]) / (2 * h)
    np.testing.assert_allclose(dr, fd, rtol=1e-4, atol=1e-6)


@pytest.mark.parametrize("make", [profiles.flat_plate, *SYNTHETIC_TABLES.values()])
def test_drag_positive_and_lift_finite(make):
    p = make()
    alpha = np.random.default_rng(1).uniform(-10, 10, 1000)
    cl, cd = p.coefficients(alpha)
    assert np.all(cd > 0) and np.all(np.isfinite(cl))


def test_top_bottom_zero_lift_at_zero():
    p = SYNTHETIC_TABLES["multi-root"]()
    assert p.coefficients(0.0)[0] == pytest.approx(0.0, abs=1e-14)
    assert p.ratio_and_derivative(math.pi / 2)[0] == pytest.approx(0.0, abs=1e-14)


def test_tabulated_plate_accuracy(plate):
    alpha = np.linspace(0, 2 * math.pi, 3601)
    exact = np.array(plate.coefficients(alpha))
    errs = {}
    for step in (1.0, 2.0, 4.0, 5.0):
        errs[step] = np.abs(np.array(tabulate(plate, step).coefficients(alpha)) - exact).max()
    assert errs[5.0] < 5e-3
    assert errs[2.0] < 1e-3
    assert errs[1.0] < errs[4.0]
    assert profiles.evaluate(tabulate(plate, 5.0), DEG(30))[0] == pytest.approx(1.2 * math.sin(DEG(60)), abs=5e-3)


def test_load_table_errors():
    good = [(0, 0, 1), (10, 0.1, 1), (20, 0.2, 1), (30, 0.3, 1)]
    with pytest.raises(InsufficientRows):
        load_table(good[:2])
    with pytest.raises(NonPositiveDrag):
        load_table(good[:3] + [(30, 0.3, -0.1)])
    with pytest.raises(NonMonotoneAlpha):
        load_table(good[:3] + [(20, 0.3, 1.0)])


def test_clamped_extension_drag_checked():
    # the clamped end value is part of the validated circle
    rows = [(0, 0.0, 1.0), (10, 0.0, 0.5), (20, 0.0, 0.8), (30, 0.0, 1.0)]
    p = load_table(rows)
    assert p.uses_clamped_extension
    assert np.all(p.coefficients(np.linspace(0, 2 * math.pi, 721))[1] > 0)


def test_extend_by_symmetry_examples(plate):
    tb = load_table(_rows_on(0, 180), SymmetryClass(top_bottom=True), name="tb")
    a, s = extend_by_symmetry(tb, DEG(-10))
    assert math.degrees(a) == pytest.approx(10.0) and s == -1
    rot = load_table(_rows_on(0, 180), SymmetryClass(rotational_180=True), name="rot")
    a, s = extend_by_symmetry(rot, DEG(200))
    assert math.degrees(a) == pytest.approx(20.0) and s == 1
    lr = load_table(_rows_on(-10, 60), SymmetryClass(left_right=True), measured_range=(-10, 60), extension="error")
    a, s = extend_by_symmetry(lr, DEG(150))
    assert math.degrees(a) == pytest.approx(30.0) and s == -1


def test_out_of_measured_range():
    p = load_table(_rows_on(-10, 60), SymmetryClass(left_right=True), extension="error")
    with pytest.raises(OutOfMeasuredRange):
        extend_by_symmetry(p, DEG(75))
    with pytest.raises(OutOfMeasuredRange):
        p.coefficients(DEG(250))


def test_clamped_extension_flagged():
    p = load_table(_rows_on(-10, 60), SymmetryClass(left_right=True))
    assert p.uses_clamped_extension
    assert np.all(np.isfinite(p.coefficients(np.linspace(0, 2 * math.pi, 100))[0]))


def test_table_csv_round_trip(tmp_path, plate):
    t = tabulate(plate, 5.0)
    path = tmp_path / "plate.csv"
    profiles.write_table_csv(path, t)
    back = profiles.read_table_csv(path)
    assert back.symmetry == t.symmetry
    alpha = np.linspace(0, 7, 200)
    np.testing.assert_allclose(back.coefficients(alpha), t.coefficients(alpha), atol=1e-12)


def test_unknown_builtin():
    with pytest.raises(ProfileError):
        profiles.builtin("no-such-profile")


def test_fingerprint_stable(plate):
    assert plate.fingerprint() == profiles.flat_plate().fingerprint()
    assert plate.fingerprint() != profiles.scaled_plate().fingerprint()


def _rows_on(lo, hi, step=5.0):
    deg = np.arange(lo, hi + step / 2, step)
    a = np.radians(deg)
    return np.column_stack([deg, 1.2 * np.sin(2 * a), 1.4 - np.cos(2 * a)])


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50))
def test_canonical_angle_in_period(a):
    p = profiles.flat_plate()
    c = float(p.canonical_angle(a))
    assert 0.0 <= c < math.pi + 1e-12
