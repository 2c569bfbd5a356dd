"""Acceptance criteria 1-10, each recorded as one pass/fail line in the terminal summary."""

import math
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE, THETA_M5
from glider_tvm import manifold as m
from glider_tvm import repulsion as rp
from glider_tvm import scenarios as sc
from glider_tvm.dynamics import accel, descent_1d, flow_batch, flow_map_gradients, integrate, sample
from glider_tvm.equilibria import delta_tau, dh_dgamma, find_equilibria, h
from glider_tvm.errors import TangencyDetected
from glider_tvm.profiles import flat_plate, tabulate

from synthetic import SYNTHETIC_TABLES

pytestmark = pytest.mark.acceptance


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    assert ok, f"criterion {key}: {detail}"


def graph_vz(curve, vx):
    order = np.argsort(curve.vx)
    return np.interp(vx, curve.vx[order], curve.vz[order])


def test_criterion_01_flat_plate_vertical_equilibrium(plate):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TangencyDetected)
        eqs = find_equilibria(0.0, plate)
    e = eqs[0]
    d, t = delta_tau(e.gamma_star, 0.0, plate)
    eig = sorted(z.real for z in e.eigenvalues)
    errs = {
        "gamma": abs(e.gamma_star - math.pi / 2),
        "v": abs(e.v_star - 2.4 ** -0.5),
        "delta": abs(d),
        "tau": abs(t - 2.0),
    }
    eig_err = max(abs(eig[0] + 3.09839), abs(eig[1]))
    ok = len(eqs) == 1 and max(errs.values()) <= 1e-8 and eig_err <= 1e-5 and e.kind in ("center", "degenerate")
    detail = " ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f" eig={eig_err:.1e} kind={e.kind}"
    record(1, ok, detail)


@pytest.fixture(scope="module")
def theorem_runs(plate):
    rng = np.random.default_rng(20240502)
    thetas = rng.uniform(-math.pi / 4, math.pi / 4, 100)
    profiles = {"flat-plate": plate, **{k: f() for k, f in SYNTHETIC_TABLES.items()}}
    runs = []
    for name, p in profiles.items():
        for th in thetas:
            runs.append((name, p, float(th), find_equilibria(float(th), p, warn=False)))
    return runs


def test_criterion_02_theorem_suite(theorem_runs):
    violations = []
    most = 0
    for name, _, th, eqs in theorem_runs:
        most = max(most, len(eqs))
        if not eqs:
            violations.append((name, th, "none"))
            continue
        if not any(e.tangent for e in eqs) and len(eqs) % 2 == 0:
            violations.append((name, th, "even count"))
        for i, e in enumerate(eqs, start=1):
            if i % 2 == 0 and not e.delta < 0:
                violations.append((name, th, f"eq {i} delta={e.delta:.3g}"))
    record(2, not violations, f"{len(theorem_runs)} (profile, theta) cases, max count {most}, "
                              f"violations {len(violations)} {violations[:3]}")


def test_criterion_03_minus_delta_identity(theorem_runs):
    worst_id, worst_fd, n = 0.0, 0.0, 0
    step = 1e-6
    for _, p, th, eqs in theorem_runs:
        for e in eqs:
            g = e.gamma_star
            dh = dh_dgamma(g, th, p)
            worst_id = max(worst_id, abs(dh + e.delta) / (1 + abs(e.delta)))
            fd = (h(g + step, th, p) - h(g - step, th, p)) / (2 * step)
            worst_fd = max(worst_fd, abs(fd - dh) / (1 + abs(dh)))
            n += 1
    ok = worst_id <= 1e-6 and worst_fd <= 1e-5
    record(3, ok, f"{n} equilibria, identity {worst_id:.1e}, finite difference {worst_fd:.1e}")


def test_criterion_04_one_dimensional_descent():
    parts = []
    ok = True
    for cd in (0.4, 1.0, 2.4):
        t, vz = descent_1d(cd, 0.0, 50.0)
        target = -math.sqrt(1.0 / cd)
        rel = abs(vz[-1] - target) / abs(target)
        monotone = np.all(np.diff(vz) <= 0.0)
        overshoot = np.any(vz < target - 1e-12)
        ok &= rel <= 1e-6 and monotone and not overshoot and t[-1] == 50.0
        parts.append(f"cd={cd:g} rel={rel:.1e}")
    record(4, ok, ", ".join(parts))


def test_criterion_05_tvm_bisection(plate, tvm_m5, tvm_m5_b, random_ics):
    c = tvm_m5
    # (a) B's bisected slices against A's curve at the same vx
    assert np.all(np.diff(c.vx) > 0) or np.all(np.diff(c.vx) < 0)
    a_err = float(np.max(np.abs(graph_vz(c, tvm_m5_b.raw[:, 0]) - tvm_m5_b.raw[:, 1])))
    ok_a = a_err <= 2e-10 + 1e-4

    times = np.linspace(0.0, 10.0, 1001)
    end_d, crossings = [], 0
    tube = 2 * c.spacing
    for x0 in random_ics:
        tr = integrate(x0, THETA_M5, plate, (0.0, 10.0))
        end_d.append(m.distance_to_curve(tr.states[-1], c))
        pts = sample(tr, times[times <= tr.t[-1]])
        inside = np.abs(pts[:, 0]) <= 1.5
        s = m.signed_offset(pts, c)
        for k in range(len(s) - 1):
            if inside[k] and inside[k + 1] and s[k] * s[k + 1] < 0 and max(abs(s[k]), abs(s[k + 1])) > tube:
                crossings += 1
    ok_b = max(end_d) < 0.05
    ok_c = crossings == 0

    # (d) invariance: every curve sample flowed forward for 10 time units
    pts = c.points.copy()
    drift = 0.0
    for _ in range(40):
        pts, ok = flow_batch(pts, THETA_M5, plate, 0.25)
        assert ok.all()
        inside = np.abs(pts[:, 0]) <= 1.5
        drift = max(drift, float(m.distance_to_curve(pts[inside], c).max()))
    ok_d = drift < 0.02

    detail = (f"(a) {a_err:.1e} (b) max end distance {max(end_d):.1e} (c) crossings {crossings} "
              f"(d) drift {drift:.1e}")
    record(5, ok_a and ok_b and ok_c and ok_d, detail)


def test_criterion_06_tvm_is_not_nullcline(plate, tvm_m5, random_ics):
    _, az = accel(tvm_m5.vx, tvm_m5.vz, THETA_M5, plate)
    peak = float(np.abs(az).max())
    flips = 0
    for x0 in random_ics:
        tr = integrate(x0, THETA_M5, plate, (0.0, 10.0))
        _, az_t = accel(tr.states[:, 0], tr.states[:, 1], THETA_M5, plate)
        big = az_t[np.abs(az_t) > 1e-9]
        flips += bool(np.any(np.diff(np.sign(big)) != 0))
    record(6, 1e-4 < peak < 0.3 and flips >= 5, f"max |az| on curve {peak:.3f}, sign changes in {flips}/20")


def test_criterion_07_repulsion_ridge(plate, tvm_m5):
    grid = rp.GridSpec()
    field = rp.repulsion_field(grid, THETA_M5, plate, -0.35)
    ridge = rp.ridge_extract(field)
    dz = grid.spacing[1]
    valid = ridge.valid
    off = np.abs(ridge.vz[valid] - graph_vz(tvm_m5, ridge.vx[valid]))
    frac = float(np.mean(off <= 2 * dz))

    g50 = rp.GridSpec(shape=(50, 50))
    VX, VZ = np.meshgrid(g50.vx, g50.vz, indexing="ij")
    rho0, esc0, deg0 = rp.repulsion_at(np.column_stack([VX.ravel(), VZ.ravel()]), THETA_M5, plate, 0.0)
    ok0 = ~(esc0 | deg0)
    id_err = float(np.max(np.abs(rho0[ok0] - 1.0)))

    rng = np.random.default_rng(11)
    cand = np.column_stack([rng.uniform(-1.5, 1.5, 400), rng.uniform(-2.0, 0.5, 400)])
    _, gv, okv = flow_map_gradients(cand, THETA_M5, plate, -0.35, method="variational")
    _, gf, okf = flow_map_gradients(cand, THETA_M5, plate, -0.35, method="finite-difference")
    use = np.flatnonzero(okv & okf)[:50]
    rel = np.linalg.norm(gv[use] - gf[use], axis=(1, 2)) / np.linalg.norm(gf[use], axis=(1, 2))
    grad_err = float(rel.max())

    ok = frac >= 0.9 and id_err <= 1e-12 and len(use) == 50 and grad_err <= 1e-4
    record(7, ok, f"ridge within 2 cells {100 * frac:.1f}% of {int(valid.sum())} columns, rho_0 {id_err:.1e}, "
                  f"gradient {grad_err:.1e}")


def test_criterion_08_surface_antisymmetry(plate):
    thetas = np.radians(np.linspace(-45.0, 45.0, 19))
    surface = m.extended_tvm_surface(plate, thetas)
    assert not surface.gaps
    worst = 0.0
    for k, s in enumerate(surface.slices):
        mirror = surface.slices[len(thetas) - 1 - k].points * [-1.0, 1.0]
        worst = max(worst, m.hausdorff(s.points, mirror))
    record(8, worst < 5e-3, f"{len(thetas)} slices, worst mirrored hausdorff {worst:.1e}")


def test_criterion_09_scenarios(plate):
    flutter = sc.PitchSchedule.sinusoid(0.0, math.radians(10.0), 0.5)
    run = sc.simulate_controlled((0.2, 0.0), flutter, plate, (0.0, 12 * flutter.period))
    lc = sc.limit_cycle_check(run)
    surface = m.extended_tvm_surface(plate, np.radians(np.arange(-10.0, 10.5, 1.0)))
    adh = sc.tvm_adherence(run, surface)
    ok_flutter = lc.return_distance < 1e-3 and adh.max_distance < 0.1

    ramp = sc.simulate_controlled((0.2, 0.0), sc.PitchSchedule.linear_ramp(), plate, (0.0, 30.0))
    stages = sc.glide_stages(ramp)

    a = sc.simulate_controlled((0.3, -1.0), sc.PitchSchedule.constant(THETA_M5), plate, (0.0, 20.0))
    ref = integrate((0.3, -1.0), THETA_M5, plate, (0.0, 20.0))
    rms = float(np.sqrt(np.mean((a.velocities - sample(ref, a.t)) ** 2)))

    ok = ok_flutter and stages["ordered"] and rms <= 1e-9
    record(9, ok, f"flutter return {lc.return_distance:.1e} adherence max {adh.max_distance:.1e}; ramp peak "
                  f"t={stages['t_peak']:.2f} shallowest t={stages['t_shallowest']:.2f} deceleration "
                  f"{stages['deceleration'][0]:.2f}-{stages['deceleration'][1]:.2f}; constant rms {rms:.1e}")


def _table_errors(exact, step):
    table = tabulate(exact, step)
    alpha = np.linspace(0.0, 2 * math.pi, 7201)
    cl, cd = table.coefficients(alpha)
    cl0, cd0 = exact.coefficients(alpha)
    coef = (float(np.abs(cl - cl0).max()), float(np.abs(cd - cd0).max()))
    e0 = find_equilibria(0.0, exact, warn=False)[0]
    eqs = find_equilibria(0.0, table, warn=False)
    near = min(eqs, key=lambda e: abs(e.gamma_star - e0.gamma_star))
    shift = max(abs(near.gamma_star - e0.gamma_star), abs(near.v_star - e0.v_star))
    spread = max(abs(e.gamma_star - e0.gamma_star) for e in eqs)
    ref = find_equilibria(THETA_M5, exact)[0]
    tilted = min(find_equilibria(THETA_M5, table, warn=False), key=lambda e: abs(e.gamma_star - ref.gamma_star))
    tilt_shift = max(abs(tilted.gamma_star - ref.gamma_star), abs(tilted.v_star - ref.v_star))
    return coef, shift, len(eqs), spread, tilt_shift


def _reduced(coarse, fine, floor=1e-10):
    # Errors at the roundoff floor cannot shrink further.
    return fine < coarse or max(coarse, fine) < floor


def test_criterion_10_tabulated_pipeline():
    exact = flat_plate()
    c5, s5, n5, w5, t5 = _table_errors(exact, 5.0)
    c25, s25, n25, w25, t25 = _table_errors(exact, 2.5)
    ok = (
        max(c5) <= 5e-3
        and s5 < 1e-3
        and all(_reduced(a, b) for a, b in zip(c5, c25))
        and _reduced(s5, s25)
        and _reduced(t5, t25)
    )
    detail = (f"5 deg: cl/cd err {c5[0]:.2e}/{c5[1]:.2e}, theta=0 shift {s5:.1e}; 2.5 deg: {c25[0]:.2e}/{c25[1]:.2e}, "
              f"shift {s25:.1e}; theta=-5 shift {t5:.1e} -> {t25:.1e}; theta=0 roots {n5}/{n25}, "
              f"spread {w5:.1e} -> {w25:.1e} rad")
    record(10, ok, detail)
