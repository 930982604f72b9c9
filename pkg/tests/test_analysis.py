import itertools

import numpy as np
import pytest

from acam.analysis import (
    DrData,
    _neighbour_traces,
    best_kappa_dr,
    best_reference,
    candidate_subsets,
    corner_interval_counts,
    dr_from_traces,
    dynamic_range,
    fail_probability,
    figure_of_merit,
    fom_from_curve,
    intervals_vs_multiplier,
    latency_at_dr,
    simulate_dr_data,
)
from acam.devices import SupplyConfig, VariationSpec
from acam.errors import DrUnreachable
from acam.pipeline import guarded_intervals
from acam.subcircuits import CellDesign

from conftest import preset, preset_intervals

SUP = SupplyConfig()


def synthetic_data(v_fm, v_mm, design="10T2M", t=1e-9):
    v_fm = np.asarray(v_fm, dtype=float)[None]
    v_mm = np.asarray(v_mm, dtype=float)[None]
    return DrData(CellDesign.parse(design), np.array([t]), v_fm, v_mm)


def brute_best(data, kappa):
    best = (None, -np.inf)
    for sub in itertools.combinations(range(data.eta), kappa):
        dr = dr_from_traces(data.design, *_neighbour_traces(data, 0, sub))
        if dr > best[1]:
            best = (sub, dr)
    return best


# --- dynamic range ---------------------------------------------------------------------


def test_dr_from_traces_example():
    assert dr_from_traces("10T2M", [0.8, 0.85], [np.nan, 0.1], [0.05, np.nan]) == pytest.approx(0.7)
    # charging rows flip the sign: mismatches rise above the full match
    assert dr_from_traces("4T2M2S", [0.1, 0.05], [np.nan, 0.8], [0.75, np.nan]) == pytest.approx(0.65)
    with pytest.raises(ValueError):
        dr_from_traces("10T2M", [0.8], [np.nan], [np.nan])


def test_two_interval_boundary():
    s = preset_intervals("10T2M").subset([3, 4])
    res = dynamic_range(s, 16, 1e-9, preset().devices_for("10T2M"), SUP)
    assert np.isnan(res.v_1lbmm[0]) and np.isnan(res.v_1ubmm[1])
    assert res.dr == pytest.approx(min(res.v_fm) - max(res.v_1ubmm[0], res.v_1lbmm[1]))
    with pytest.raises(ValueError):
        dynamic_range(s.subset([0]), 16, 1e-9)


def test_candidate_subsets():
    assert candidate_subsets(5, 3).shape == (10, 3)
    big = candidate_subsets(40, 5)
    assert all(np.all(np.diff(row) > 0) for row in big)
    assert (0, 10, 20, 30, 39) not in set(map(tuple, big)) and (0, 9, 18, 27, 36) in set(map(tuple, big))
    with pytest.raises(ValueError):
        candidate_subsets(3, 4)


def test_best_kappa_picks_the_middle_window():
    # levels 2..4 discharge cleanly; the outer levels leak into their neighbours
    eta = 7
    v_fm = np.full(eta, 0.7)
    v_mm = np.full((eta, eta), 0.05)
    v_mm[0, 1] = v_mm[1, 0] = v_mm[5, 6] = v_mm[6, 5] = 0.6
    v_fm[[2, 3, 4]] = 0.8
    data = synthetic_data(v_fm, v_mm)
    sub, dr = best_kappa_dr(data, 3)
    assert sub == (2, 3, 4) and dr == pytest.approx(0.75)
    assert (sub, dr) == brute_best(data, 3)


def test_best_kappa_matches_brute_force_on_random_data():
    rng = np.random.default_rng(5)
    for _ in range(20):
        eta = int(rng.integers(3, 8))
        data = synthetic_data(rng.uniform(0.5, 0.8, eta), rng.uniform(0.0, 0.5, (eta, eta)))
        kappa = int(rng.integers(2, eta + 1))
        sub, dr = best_kappa_dr(data, kappa)
        assert dr == pytest.approx(brute_best(data, kappa)[1])


def test_full_kappa_is_the_full_set_and_dr_drops_with_kappa():
    cfg = preset()
    s = preset_intervals("4T2M2S")
    data = simulate_dr_data(s, 16, [1e-9], cfg.devices_for("4T2M2S"), SUP)
    sub, dr = best_kappa_dr(data, s.eta)
    assert sub == tuple(range(s.eta))
    assert dr == pytest.approx(dynamic_range(s, 16, 1e-9, cfg.devices_for("4T2M2S"), SUP).dr)
    drs = [best_kappa_dr(data, k)[1] for k in range(2, s.eta + 1)]
    assert np.all(np.diff(drs) <= 1e-12)


# --- figure of merit -------------------------------------------------------------------


def test_fom_from_curve_constant_and_linear():
    t = np.geomspace(0.5e-9, 10e-9, 40)
    assert fom_from_curve(t, np.full(40, 0.3)) == pytest.approx((t[0], 0.3 / t[0]))
    best_t, fom = fom_from_curve(t, 2e8 * t)  # constant ratio: ties go to the shortest time
    assert best_t == t[0] and fom == pytest.approx(2e8)


def test_fom_from_curve_saturating_matches_dense_oracle():
    tau = 1e-9

    def dr(t):
        return 0.7 * (1 - np.exp(-((t / tau) ** 2)))

    # d/dt [(1 - e^{-x^2}) / t] = 0 at x^2 where 1 + 2x^2 = e^{x^2}
    dense = np.geomspace(0.5e-9, 10e-9, 200001)
    t_star = dense[np.argmax(dr(dense) / dense)]
    t = np.geomspace(0.5e-9, 10e-9, 400)
    best_t, fom = fom_from_curve(t, dr(t))
    assert best_t == pytest.approx(t_star, rel=0.01)
    assert fom * best_t == pytest.approx(dr(best_t))


def test_figure_of_merit_on_preset():
    cfg = preset()
    s = preset_intervals("10T2M")
    res = figure_of_merit(s, 16, 3, devices=cfg.devices_for("10T2M"), supply=SUP)
    assert res.fom * res.best_t == pytest.approx(res.dr)
    assert len(res.subset) == 3 and res.dr > 0


# --- latency ---------------------------------------------------------------------------


def test_latency_reaches_target_and_unreachable_raises():
    cfg = preset()
    dev = cfg.devices_for("10T2M")
    s = preset_intervals("10T2M").subset([0, 12, 23])
    t = latency_at_dr(s, 16, 0.1, dev, SUP)
    assert dynamic_range(s, 16, t * 1.02, dev, SUP).dr >= 0.1
    assert dynamic_range(s, 16, t * 0.98, dev, SUP).dr < 0.1
    with pytest.raises(DrUnreachable) as exc:
        latency_at_dr(s, 16, 0.79, dev, SUP, t_max=2e-9)
    assert exc.value.achieved < 0.79


# --- failure probability ---------------------------------------------------------------


def brute_reference(vm, vx, pulls_down, vdd, step=1e-3):
    grid = np.round(np.arange(0.0, vdd + step / 2, step), 9)
    if pulls_down:
        fails = [(np.sum(vm < g) + np.sum(vx > g)) for g in grid]
    else:
        fails = [(np.sum(vm > g) + np.sum(vx < g)) for g in grid]
    return min(fails)


def test_best_reference_is_optimal():
    rng = np.random.default_rng(2)
    for pulls_down in (True, False):
        for _ in range(10):
            vm = rng.normal(0.6 if pulls_down else 0.2, 0.08, 50)
            vx = rng.normal(0.2 if pulls_down else 0.6, 0.08, 70)
            v_ref, mf, xf = best_reference(vm, vx, pulls_down, 0.8)
            assert mf + xf == brute_reference(vm, vx, pulls_down, 0.8)
    v_ref, mf, xf = best_reference([0.7, 0.75], [0.1, 0.2], True, 0.8)
    assert (mf, xf) == (0, 0) and 0.2 <= v_ref < 0.7
    assert v_ref == pytest.approx(0.45, abs=1e-3)  # centre of the clean gap


def test_zero_variance_fails_nothing_on_a_separated_set():
    cfg = preset()
    s = preset_intervals("10T2M").subset([0, 12, 23])
    rep = fail_probability(s, 16, 0.5e-9, VariationSpec(sigma_vt=0.0), 5, cfg.devices_for("10T2M"), SUP)
    assert rep.p_f == 0 and rep.n_decisions == 5 * (3 + 4)


def test_fail_probability_deterministic_and_guard_bands_help():
    cfg = preset()
    dev = cfg.devices_for("10T2M")
    var = VariationSpec(seed=4)
    nominal = preset_intervals("10T2M").subset([10, 11, 12])
    a = fail_probability(nominal, 16, 0.5e-9, var, 100, dev, SUP)
    assert a == fail_probability(nominal, 16, 0.5e-9, var, 100, dev, SUP)
    # 10 mV windows are narrower than the threshold-induced bound spread
    assert a.p_f > 0.2
    m, guarded = guarded_intervals(cfg, "10T2M", "40-60", 2.5, 3, n_runs=200)
    assert m == 2.5 and guarded.eta >= 3
    b = fail_probability(guarded.subset([0, 1, 2]), 16, 0.5e-9, var, 100, dev, SUP)
    assert b.p_f < 0.1 * a.p_f


def test_stiff_rows_refine_the_step():
    # a wide 8T2M switch mismatching far from its interval discharges in a few ps
    cfg = preset()
    s = preset_intervals("8T2M").subset([0, 8, 16])
    rep = fail_probability(s, 16, 0.5e-9, VariationSpec(seed=4), 20, cfg.devices_for("8T2M"), SUP)
    assert 0 <= rep.p_f <= 1


# --- sweeps ----------------------------------------------------------------------------


def test_multiplier_zero_is_nominal_and_counts_shrink():
    cfg = preset()
    table = intervals_vs_multiplier("10T2M", ["40-60"], [0, 1, 3], cfg.variation(), 50, devices=cfg.devices_for("10T2M"),
                                    supply=SUP)
    assert table[("40-60", 0.0)] == preset_intervals("10T2M").eta
    assert table[("40-60", 0.0)] >= table[("40-60", 1.0)] >= table[("40-60", 3.0)]


def test_tt_corner_is_nominal():
    cfg = preset()
    counts = corner_interval_counts("4T2M2S", "40-60", ["TT"], devices=cfg.devices_for("4T2M2S"), supply=SUP)
    assert counts == {"TT": preset_intervals("4T2M2S").eta}
