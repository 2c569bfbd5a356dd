import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glider_tvm import repulsion as rp
from glider_tvm.dynamics import acceleration
from glider_tvm.equilibria import find_equilibria
from glider_tvm.errors import DegenerateTangent, EmptyField, EscapeDuringWindow
from glider_tvm.manifold import distance_to_curve
from glider_tvm.profiles import flat_plate

TH = math.radians(-5.0)
SMALL = rp.GridSpec((-1.5, 1.5), (-2.0, 0.5), (41, 41))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-2.0, 0.5))
def test_normal_is_unit_and_orthogonal(vx, vz):
    p = flat_plate()
    a = np.array(acceleration((vx, vz), TH, p))
    if np.hypot(*a) <= 1e-9:
        return
    n = rp.normal_vector((vx, vz), TH, p)
    assert np.linalg.norm(n) == pytest.approx(1.0)
    assert n @ a == pytest.approx(0.0, abs=1e-12 * (1 + np.hypot(*a)))
    assert n[0] * a[1] - n[1] * a[0] < 0  # counterclockwise from a


def test_normal_degenerate_at_equilibrium(plate):
    eq = find_equilibria(TH, plate)[0]
    with pytest.raises(DegenerateTangent):
        rp.normal_vector(eq.state, TH, plate)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-2.0, 0.5))
def test_zero_window_is_identity(vx, vz):
    p = flat_plate()
    try:
        rho = rp.repulsion_factor((vx, vz), TH, p, 0.0)
    except DegenerateTangent:
        return
    assert rho == pytest.approx(1.0, abs=1e-12)


def test_gradient_methods_agree(plate):
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-1.5, 1.5, 60), rng.uniform(-2.0, 0.5, 60)])
    a, esc_a, deg_a = rp.repulsion_at(pts, TH, plate, method="variational")
    b, esc_b, _ = rp.repulsion_at(pts, TH, plate, method="finite-difference")
    assert np.array_equal(esc_a, esc_b)
    ok = ~(esc_a | deg_a)
    assert ok.sum() > 10
    np.testing.assert_allclose(a[ok], b[ok], rtol=1e-5, atol=1e-8)


def test_escape_is_reported(plate):
    with pytest.raises(EscapeDuringWindow):
        rp.repulsion_factor((0.0, 3.0), TH, plate, -2.0)
    rho, esc, _ = rp.repulsion_at([[0.0, 3.0]], TH, plate, -2.0)
    assert esc[0] and np.isnan(rho[0])


def test_field_layout_and_masks(plate):
    f = rp.repulsion_field(SMALL, TH, plate)
    assert f.values.shape == (41, 41)
    i, j = np.argwhere(~f.mask)[len(np.argwhere(~f.mask)) // 2]
    direct = rp.repulsion_factor((f.vx[i], f.vz[j]), TH, plate, rp.DEFAULT_T)
    assert f.values[i, j] == pytest.approx(direct, rel=1e-6)
    assert np.all(np.isnan(f.values[f.mask]))
    assert np.all(np.isfinite(f.values[~f.mask]))
    assert f.mask_escape.any()
    assert not (f.mask_escape & f.mask_degenerate).any()


def test_field_independent_of_workers(plate):
    a = rp.repulsion_field(SMALL, TH, plate, workers=1)
    b = rp.repulsion_field(SMALL, TH, plate, workers=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_ridge_tracks_manifold_coarse(plate, tvm_m5):
    grid = rp.GridSpec((-1.0, 1.0), (-1.5, 0.0), (21, 151))
    ridge = rp.ridge_extract(rp.repulsion_field(grid, TH, plate))
    d = distance_to_curve(ridge.polyline(), tvm_m5)
    assert np.median(d) < 2 * grid.spacing[1]


def _field(values, vz):
    values = np.asarray(values, dtype=float)
    mask = np.isnan(values)
    return rp.RepulsionField(np.arange(values.shape[0], dtype=float), np.asarray(vz, dtype=float), values, mask,
                             np.zeros_like(mask), -0.35, 0.0)


def test_ridge_subcell_parabola():
    vz = np.linspace(0.0, 1.0, 11)
    peaks = [0.33, 0.5, 0.77]
    f = _field([-(vz - c) ** 2 for c in peaks], vz)
    r = rp.ridge_extract(f)
    np.testing.assert_allclose(r.vz, peaks, atol=1e-12)
    np.testing.assert_allclose(r.value, 0.0, atol=1e-12)


def test_ridge_gap_columns_stay_nan():
    vz = np.linspace(0.0, 1.0, 5)
    f = _field([[0, 1, 0, 0, 0], [np.nan] * 5, [0, 0, 0, 2, 1]], vz)
    r = rp.ridge_extract(f)
    assert np.isnan(r.vz[1]) and list(r.valid) == [True, False, True]
    assert r.polyline().shape == (2, 2)


def test_ridge_edge_maximum_not_refined():
    vz = np.linspace(0.0, 1.0, 5)
    r = rp.ridge_extract(_field([[5, 1, 0, 0, 0], [0, 0, 0, 1, 5]], vz))
    np.testing.assert_allclose(r.vz, [0.0, 1.0])


def test_ridge_empty_field():
    with pytest.raises(EmptyField):
        rp.ridge_extract(_field([[np.nan] * 3, [np.nan] * 3, [1, 2, 1]], [0, 1, 2]))


def test_grid_spec_spacing():
    g = rp.GridSpec()
    assert g.shape == (301, 301)
    assert g.spacing == pytest.approx((0.01, 2.5 / 300))
    assert len(g.vx) == 301 and g.vz[0] == -2.0


def test_normal_offsets_straight_line():
    pts = np.column_stack([np.linspace(0, 1, 5), np.zeros(5)])
    up, down = rp.normal_offsets(pts, 0.1)
    np.testing.assert_allclose(up[:, 1], 0.1)
    np.testing.assert_allclose(down[:, 1], -0.1)
