"""Acceptance criteria. Each test prints its measured values; the terminal summary
lists one PASS/FAIL line per criterion."""

import math
import time

import numpy as np
import pytest

from acam.analysis import corner_interval_counts, intervals_vs_multiplier
from acam.array import (
    RowConfig,
    cell_switch_conductance,
    default_c_ml,
    effective_resistances,
    integrate_ml,
    ml_transient,
)
from acam.cli import main
from acam.devices import Corner, VariationSpec
from acam.intervals import build_intervals, discrete_levels, validate_interval_set
from acam.luts import Level, extract_bounds
from acam.pipeline import design_summary, latency_table
from acam.subcircuits import CellConfig, gain, vtc_sweep

from conftest import DESIGNS, preset, preset_intervals
from test_intervals import closed_form_count, linear_luts

LEVEL = "40-60"


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0


def test_criterion_1_calibration_anchor():
    cfg = preset()
    dev, sup = cfg.devices_for("6T2M"), cfg.supply
    cut = Level.cutoff(dev.n_sw.vth, sup.vdd)
    with Timer() as tm:
        lb = extract_bounds("6T2M", "LB", 619e3, cut, dev, sup).b_lo
        ub = extract_bounds("6T2M", "UB", 63.1e3, cut, dev, sup).b_lo
    print(f"\n[LB, UB] = [{lb:.4f}, {ub:.4f}] V (anchor [0.255, 0.374] V), {tm.s:.3f} s")
    assert lb == pytest.approx(0.255, abs=0.03)
    assert ub == pytest.approx(0.374, abs=0.03)
    assert tm.s < 1.0


def test_criterion_2_gain_dominance():
    cfg = preset()
    sup = cfg.supply
    r_grid = np.geomspace(5e3, 2.5e6, 50)
    v = np.linspace(0.0, sup.vdd, 801)
    with Timer() as tm:
        g = {d: np.array([[gain(c) for c in vtc_sweep(CellConfig(d, r, r), cfg.devices_for(d), sup, v)] for r in r_grid])
             for d in ("6T2M", "10T2M", "8T2M")}
    ratio = g["10T2M"][:, 0] / g["6T2M"][:, 0]
    print(f"\nLBS gain 6T2M {g['6T2M'][:, 0].min():.2f}..{g['6T2M'][:, 0].max():.2f}, "
          f"10T2M {g['10T2M'][:, 0].min():.1f}..{g['10T2M'][:, 0].max():.1f}, "
          f"8T2M {g['8T2M'][:, 0].min():.1f}..{g['8T2M'][:, 0].max():.1f}; peak 10T2M/6T2M {ratio.max():.1f}; {tm.s:.1f} s")
    for side in (0, 1):
        assert np.all(g["10T2M"][:, side] >= g["6T2M"][:, side])
        assert np.all(g["8T2M"][:, side] >= g["6T2M"][:, side])
    assert ratio.max() >= 5
    assert tm.s < 10


def test_criterion_3_interval_oracle():
    cfg = preset()
    with Timer() as tm:
        print()
        for design in ("6T2M",) + DESIGNS:
            for level in ("40-60", "49-51", "30-70"):
                s = preset_intervals(design, level)
                rep = validate_interval_set(s, cfg.devices_for(design), cfg.supply)
                print(f"{design:7s} {level}: eta={s.eta:3d} pairs={rep.n_checked:5d} violations={len(rep.violations)}")
                assert s.eta > 0 and rep.ok and rep.n_checked == s.eta**2
    print(f"{tm.s:.1f} s")
    assert tm.s < 60


def test_criterion_4_synthetic_exactness():
    with Timer() as tm:
        lb, ub = linear_luts(0.1, 0.8, fr=0.02)
        s = build_intervals(lb, ub, 0.01)
        spacing = np.diff(discrete_levels(s))
    expected = closed_form_count(0.1, 0.8, 0.01, 0.02)
    print(f"\neta={s.eta} (closed form {expected}), spacing {spacing.min() * 1e3:.9f}..{spacing.max() * 1e3:.9f} mV")
    assert s.eta == expected
    assert np.allclose(spacing, 0.05, rtol=0, atol=1e-12)
    assert tm.s < 1.0


def test_criterion_5_guard_band_monotonicity():
    cfg = preset()
    m_grid = [0, 1, 1.5, 2, 2.5, 3]
    levels = ["40-60", "49-51"]
    with Timer() as tm:
        print()
        for design in DESIGNS:
            table = intervals_vs_multiplier(design, levels, m_grid, cfg.variation(), 200,
                                            devices=cfg.devices_for(design), supply=cfg.supply)
            for level in levels:
                counts = [table[(level, float(m))] for m in m_grid]
                print(f"{design:7s} {level}: eta(m) = {counts}")
                assert all(a >= b for a, b in zip(counts, counts[1:]))
    print(f"{tm.s:.1f} s")
    assert tm.s < 300


def test_criterion_6_interval_count_orderings():
    eta = {d: preset_intervals(d, "40-60").eta for d in DESIGNS}
    narrow = preset_intervals("4T2M2S", "49-51").eta
    targets = {"10T2M": 24, "8T2M": 17, "4T2M2S": 6}
    print(f"\n40-60: {eta} (targets {targets}); 4T2M2S 49-51: {narrow} (target 31)")
    assert eta["10T2M"] >= eta["8T2M"] >= eta["4T2M2S"]
    assert narrow > eta["4T2M2S"]
    for d, t in targets.items():
        assert abs(eta[d] - t) <= 0.2 * t
    assert abs(narrow - 31) <= 0.2 * 31


def test_criterion_7_slopes_and_rc_oracle():
    cfg = preset()
    sup = cfg.supply
    with Timer() as tm:
        g, c = 10e-6, 20e-15
        t, v = integrate_ml(lambda x: -g * x, 0.8, c, 5e-9)
        exact = 0.8 * np.exp(-g * t / c)
        rc_err = float(np.max(np.abs(v - exact) / exact))
        errs = []
        for design in ("10T2M", "8T2M"):
            dev = cfg.devices_for(design)
            s = preset_intervals(design)
            i, n = s.eta // 2, 16
            c_ml = default_c_ml(n)
            g_m = sum(cell_switch_conductance(s[i].cell(design), dev, sup, s[i].d, sup.vpc))
            g_mm = sum(cell_switch_conductance(s[i + 1].cell(design), dev, sup, s[i].d, sup.vpc))
            r_fm, r_1mm = effective_resistances(1 / float(g_m), 1 / float(g_mm), n)
            tt = np.array([0.0, 1e-12])
            fm = ml_transient(RowConfig(design, [s[i].cell(design)] * n), [s[i].d] * n, tt, dev, sup)
            mm = ml_transient(RowConfig(design, [s[i + 1].cell(design)] + [s[i].cell(design)] * (n - 1)), [s[i].d] * n,
                              tt, dev, sup)
            for trace, r in ((fm, r_fm), (mm, r_1mm)):
                slope = (sup.vpc - trace.v_ml[1]) / 1e-12
                errs.append(abs(slope / (sup.vpc / (r * c_ml)) - 1))
    print(f"\nRC max rel error {rc_err:.2e}; slope rel errors {[f'{e:.3%}' for e in errs]}; {tm.s:.1f} s")
    assert rc_err < 0.01
    assert max(errs) < 0.05
    assert tm.s < 10


def test_criterion_8_metric_orderings():
    cfg = preset()
    with Timer() as tm:
        res = {d: design_summary(cfg, d, LEVEL, 16, fail_runs=300) for d in DESIGNS}
    print()
    for d, r in res.items():
        print(f"{d:7s} eta={r.eta:2d} DR(1ns)={r.dr * 1e3:6.1f} mV latency={r.latency * 1e12:6.1f} ps "
              f"energy={r.energy * 1e15:5.2f} fJ p_f={r.p_f:.4f} (m={r.m:g})")
    print(f"{tm.s:.1f} s")
    a, b, c = res["10T2M"], res["8T2M"], res["4T2M2S"]
    assert a.dr > c.dr > b.dr
    assert b.latency < a.latency < c.latency
    assert b.energy < a.energy < c.energy
    assert a.p_f < b.p_f < c.p_f
    assert tm.s < 600


def test_criterion_9_corner_stability():
    cfg = preset()
    with Timer() as tm:
        print()
        for d in DESIGNS:
            counts = corner_interval_counts(d, LEVEL, tuple(Corner), devices=cfg.devices_for(d), supply=cfg.supply)
            print(f"{d:7s} {counts}")
            assert all(abs(counts[k] - counts["TT"]) <= 2 for k in counts)
            assert counts["FS"] >= counts["SF"]
    print(f"{tm.s:.1f} s")
    assert tm.s < 120


def test_criterion_10_parasitic_latency():
    cfg = preset()
    cols = [1, 16, 32, 64, 128]
    with Timer() as tm:
        print()
        for d in ("10T2M", "4T2M2S"):
            lat = {}
            for lead in (5.0, 0.0):
                rows = latency_table(cfg, d, LEVEL, cols=cols, lead=lead)
                lat[lead] = np.array([math.inf if math.isnan(r[1]) else r[1] for r in rows])
                print(f"{d:7s} lead={lead:g} tau: " + " ".join(f"{c}:{x * 1e12:.1f}ps" for c, x in zip(cols, lat[lead])))
                assert np.all(np.diff(lat[lead]) >= 0)
            penalty = {k: v - v[0] for k, v in lat.items()}
            assert np.all(lat[5.0] <= lat[0.0]) and np.all(penalty[5.0] <= penalty[0.0] + 1e-15)
    print(f"{tm.s:.1f} s")
    assert tm.s < 120


@pytest.mark.parametrize("command", ["intervals", "dr", "mc"])
def test_criterion_11_determinism(tmp_path, command):
    args = [command, "--set", "designs=[10T2M, 4T2M2S]", "--set", "mc.n_runs=20", "--set", "mc.m_grid=[0, 2]"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = sorted((tmp_path / "a" / command).glob("*.csv"))
    b = sorted((tmp_path / "b" / command).glob("*.csv"))
    print(f"\n{command}: {[p.name for p in a]}")
    assert [p.name for p in a] == [p.name for p in b] and a
    assert all(x.read_bytes() == y.read_bytes() for x, y in zip(a, b))
