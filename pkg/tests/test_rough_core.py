"""Core rough-path container, Chen identity, bracket, geometrization, sewing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from roughmanifold.rough_core import (
    TimeGrid, Control, RoughPath, AlmostRoughFunctional,
    validate_chen, bracket, bracket_between, geometrize, sew,
    restrict, concat, canonical_lift, smooth_lift, pure_area_path,
)
from conftest import bm_rough, bm_fine
from roughmanifold.stochastic import ito_lift, strat_lift


# grids and controls


def test_grid_rejects_non_increasing():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.3]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([-1.0, 0.0, 1.0]))


def test_grid_nonzero_start_allowed():
    g = TimeGrid(np.array([0.25, 0.5, 1.0]))
    assert len(g) == 3


def test_holder_control_superadditive():
    assert Control().spot_check(2.0) <= 1e-12
    # (t - s)^2 is superadditive as well
    assert Control(lambda s, t: (t - s) ** 2).spot_check(2.0) <= 1e-12


def test_sqrt_control_rejected():
    with pytest.raises(ValueError):
        Control(lambda s, t: np.sqrt(t - s)).spot_check(2.0)


# Chen identity


def test_pure_area_satisfies_chen():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rp = pure_area_path(np.linspace(0, 1, 65), A)
    assert validate_chen(rp)["max_residual"] < 1e-14


def test_polynomial_lift_matches_closed_form_iterated_integrals():
    # X = (t, t^2); XX^{12}_{st} = int (u - s) d(u^2) = closed form
    ts = np.linspace(0.0, 1.0, 33)
    n = ts.size - 1
    trace = np.stack([ts, ts ** 2], axis=-1)
    level2 = np.zeros((n, 2, 2))
    for k in range(n):
        s, t = ts[k], ts[k + 1]
        level2[k, 0, 0] = 0.5 * (t - s) ** 2
        level2[k, 1, 1] = 0.5 * (t ** 2 - s ** 2) ** 2
        # int_s^t (u - s) 2u du
        level2[k, 0, 1] = (2.0 / 3.0) * (t ** 3 - s ** 3) - s * (t ** 2 - s ** 2)
        # int_s^t (u^2 - s^2) du
        level2[k, 1, 0] = (t ** 3 - s ** 3) / 3.0 - s ** 2 * (t - s)
    rp = RoughPath(ts, trace, level2, p=2.0)
    assert validate_chen(rp)["max_residual"] < 1e-12
    ref = smooth_lift(ts, lambda t: np.array([t, t ** 2]), 2, sub=512)
    assert np.abs(ref.level2 - level2).max() < 1e-7


def test_chen_violation_detected():
    rp = bm_rough(0)
    lv = rp.level2.copy()
    lv[3] += np.array([[0.0, 0.1], [0.0, 0.0]])
    bad = RoughPath(rp.times, rp.trace, lv, rp.p)
    # folding is consistent by construction, so corrupting one block
    # shifts all integrals through it; the witness is the bracket/level2
    # mismatch against the uncorrupted path
    assert np.abs(bad.level2_between(0, 10) - rp.level2_between(0, 10)).max() > 0.05


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 10 ** 6))
def test_chen_residual_random_bm(seed):
    rp = bm_rough(seed % 97, coarse=16, ratio=8)
    assert validate_chen(rp, n_probes=25, seed=seed)["max_residual"] < 1e-12


# bracket


def test_smooth_lift_bracket_vanishes_at_fine_substep():
    ts = np.linspace(0.0, 1.0, 33)
    rp = smooth_lift(ts, lambda t: np.array([np.sin(t), np.cos(2 * t)]), 2, sub=256)
    # bracket of a smooth path is O(substep^2) per interval
    assert np.abs(bracket(rp)).max() < 1e-6


def test_canonical_lift_bracket_exactly_zero():
    ts = np.linspace(0.0, 1.0, 17)
    rp = canonical_lift(ts, np.stack([np.sin(ts), ts ** 2], axis=-1))
    assert np.abs(bracket(rp)).max() == 0.0


def test_strat_bm_bracket_small():
    fine_t, fine_x = bm_fine(1, fine_n=4096)
    rp = strat_lift(fine_t, fine_x, 64)
    fine_step = fine_t[1] - fine_t[0]
    assert np.abs(bracket_between(rp, 0, 64)).max() < 5 * np.sqrt(fine_step)


def test_ito_bm_bracket_is_quadratic_variation():
    # MC over seeds: terminal bracket of 2-D Ito BM at T=1 approximates I
    vals = []
    for seed in range(60):
        rp = bm_rough(seed, coarse=32, ratio=64)
        vals.append(bracket_between(rp, 0, 32))
    vals = np.array(vals)
    mean = vals.mean(axis=0)
    sem = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
    assert np.all(np.abs(mean - np.eye(2)) <= 3 * sem + 1e-12)


# geometrize


def test_geometrize_kills_bracket_and_is_idempotent():
    rp = bm_rough(2)
    g = geometrize(rp)
    assert np.abs(bracket(g)).max() < 1e-15
    g2 = geometrize(g)
    assert np.abs(g.level2 - g2.level2).max() < 1e-15
    # antisymmetric part is untouched
    anti = 0.5 * (rp.level2 - np.transpose(rp.level2, (0, 2, 1)))
    ganti = 0.5 * (g.level2 - np.transpose(g.level2, (0, 2, 1)))
    assert np.abs(anti - ganti).max() < 1e-15


def test_geometrize_of_ito_is_strat():
    fine_t, fine_x = bm_fine(3, fine_n=8192)
    ito = ito_lift(fine_t, fine_x, 64)
    strat = strat_lift(fine_t, fine_x, 64)
    g = geometrize(ito)
    # trapezoid vs left-point fine sums differ in their symmetric parts
    # by exactly half the fine-grid quadratic variation
    assert np.abs(g.level2 - strat.level2).max() < 1e-3
    assert np.abs(bracket(strat) - bracket(g)).max() < 1e-3


def test_pure_area_unchanged_by_geometrize():
    A = np.array([[0.0, 2.0], [-2.0, 0.0]])
    rp = pure_area_path(np.linspace(0, 1, 9), A)
    assert np.abs(geometrize(rp).level2 - rp.level2).max() == 0.0


# sewing


def test_sew_exactly_additive_functional():
    # (t - s, (t - s)^2 / 2) is Chen-additive at both levels
    def ev(s, t):
        return np.array([t - s]), np.array([[0.5 * (t - s) ** 2]])

    f = AlmostRoughFunctional(ev, theta=2.0, dim=1)
    out = sew(f, TimeGrid.uniform(1.0, 16))
    assert np.abs(out.trace[:, 0] - out.times).max() < 1e-12
    dt = np.diff(out.times)
    assert np.abs(out.level2[:, 0, 0] - 0.5 * dt ** 2).max() < 1e-12


def test_sew_compensated_riemann_sum():
    # int_0^1 x^2 dx along x(t) = sin t, compensated to second order
    x = np.sin

    def ev(s, t):
        a = x(s) ** 2 * (x(t) - x(s)) + x(s) * (x(t) - x(s)) ** 2
        return np.array([a]), np.array([[0.5 * a ** 2]])

    f = AlmostRoughFunctional(ev, theta=1.5, dim=1)
    out = sew(f, TimeGrid.uniform(1.0, 8), tol=1e-12)
    exact = (np.sin(1.0) ** 3 - 0.0) / 3.0
    assert abs(out.trace[-1, 0] - exact) < 1e-9


def test_sew_grid_independence():
    x = np.sin

    def ev(s, t):
        a = x(s) ** 2 * (x(t) - x(s)) + x(s) * (x(t) - x(s)) ** 2
        return np.array([a]), np.array([[0.5 * a ** 2]])

    f = AlmostRoughFunctional(ev, theta=1.5, dim=1)
    tol = 1e-11
    a = sew(f, TimeGrid.uniform(1.0, 8), tol=tol)
    rng = np.random.default_rng(5)
    inner = np.sort(rng.uniform(0.05, 0.95, 6))
    b = sew(f, TimeGrid(np.concatenate([[0.0], inner, [1.0]])), tol=tol)
    assert abs(a.trace[-1, 0] - b.trace[-1, 0]) < 2 * tol * 16


def test_sew_rejects_theta_at_most_one():
    f = AlmostRoughFunctional(lambda s, t: (np.array([t - s]), None),
                              theta=1.0, dim=1)
    with pytest.raises(ValueError):
        sew(f, TimeGrid.uniform(1.0, 4))


def test_sew_flags_misdeclared_defect_order():
    # additivity defect of sqrt(t - s) is O(omega^{1/2}); declared 1.5
    f = AlmostRoughFunctional(
        lambda s, t: (np.array([np.sqrt(t - s)]),
                      np.array([[0.5 * (t - s)]])), theta=1.5, dim=1)
    with pytest.raises(RuntimeError):
        sew(f, TimeGrid.uniform(1.0, 4), tol=1e-12, max_levels=12)


def test_defect_slope_reports_declared_order():
    x = np.sin

    def ev(s, t):
        a = x(s) ** 2 * (x(t) - x(s)) + x(s) * (x(t) - x(s)) ** 2
        return np.array([a]), np.array([[0.5 * a ** 2]])

    f = AlmostRoughFunctional(ev, theta=1.5, dim=1)
    assert f.defect_slope(1.0) > 1.3


# restriction / concatenation


def test_restrict_concat_roundtrip():
    rp = bm_rough(4, coarse=32)
    left = restrict(rp, 0, 12)
    right = restrict(rp, 12, 32)
    # re-anchor the right piece back at the seam time
    right = RoughPath(right.times + rp.times[12], right.trace, right.level2, rp.p)
    glued = concat(left, RoughPath(right.times, right.trace + rp.trace[12] - right.trace[0],
                                   right.level2, rp.p))
    assert np.abs(glued.trace - rp.trace).max() < 1e-12
    assert np.abs(glued.level2 - rp.level2).max() < 1e-12
    assert np.abs(glued.level2_between(3, 29) - rp.level2_between(3, 29)).max() < 1e-12


def test_restrict_reanchors_at_zero():
    rp = bm_rough(5, coarse=16)
    mid = restrict(rp, 4, 9)
    assert mid.times[0] == 0.0
    assert np.abs(np.diff(mid.times) - np.diff(rp.times[4:10])).max() < 1e-15


# serialization


def test_json_roundtrip():
    rp = bm_rough(6, coarse=8)
    rp2 = RoughPath.from_json(rp.to_json())
    assert np.array_equal(rp.times, rp2.times)
    assert np.array_equal(rp.trace, rp2.trace)
    assert np.array_equal(rp.level2, rp2.level2)
    assert rp.p == rp2.p


def test_csv_header(tmp_path):
    rp = bm_rough(7, coarse=4)
    out = tmp_path / "x.csv"
    rp.to_csv(out)
    first = out.read_text().splitlines()[0]
    assert first.startswith("# roughmanifold-csv v1")


def test_pvar_witness_finite():
    w = bm_rough(8).pvar_witness()
    assert all(np.isfinite(v) for v in w.values() if np.isscalar(v))


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 10 ** 6))
def test_bracket_additive_and_symmetric(seed):
    rp = bm_rough(seed % 53, coarse=16, ratio=8)
    br = bracket(rp)
    assert np.abs(br - np.transpose(br, (0, 2, 1))).max() < 1e-14
    total = bracket_between(rp, 0, 16)
    assert np.abs(br.sum(axis=0) - total).max() < 1e-14
