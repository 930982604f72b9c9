"""Metrics over built interval sets: dynamic range, figure of merit, latency,
Monte Carlo failure probability, and interval-count sweeps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .array import default_c_ml, first_crossing, initial_ml_voltage, integrate_ml, switch_bank
from .devices import Corner, DeviceSet, MemristorMode, SupplyConfig, VariationSpec, sample_resistance
from .errors import DrUnreachable
from .intervals import IntervalSet, build_intervals, build_intervals_guarded
from .luts import Level, build_lut, default_r_grid, guarded_lut, mc_bound_statistics
from .subcircuits import CellDesign, CellDevices

T_MIN = 0.5e-9
T_MAX = 10e-9
EXHAUSTIVE_LIMIT = 20000


def fom_t_grid(t_range=(T_MIN, T_MAX), n: int = 40) -> np.ndarray:
    return np.geomspace(t_range[0], t_range[1], n)


@dataclass(frozen=True)
class DrData:
    """Sampled match-line voltages of every full-match and pairwise one-mismatch row.

    ``v_fm[k, i]``: all cells store interval ``i``, input ``d_i``.
    ``v_mm[k, i, j]``: one cell stores ``j``, the rest ``i``, input ``d_i``.
    """

    design: CellDesign
    t: np.ndarray
    v_fm: np.ndarray
    v_mm: np.ndarray

    @property
    def eta(self) -> int:
        return self.v_fm.shape[1]

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.t - t)))
        if not np.isclose(self.t[k], t, rtol=1e-6, atol=1e-15):
            raise ValueError(f"t={t:g} s is not on the sampled grid")
        return k


def _sign(design) -> float:
    return 1.0 if CellDesign.parse(design).pulls_down else -1.0


def simulate_dr_data(iset: IntervalSet, n: int, t_samples, devices=None, supply: SupplyConfig | None = None,
                     c_ml: float | None = None) -> DrData:
    """Integrate every fm and (i, j) one-mismatch row once and sample at ``t_samples``."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    eta = len(iset)
    if eta < 1:
        raise ValueError("empty interval set")
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    r_lb = np.array([iv.r_lb for iv in iset])
    r_ub = np.array([iv.r_ub for iv in iset])
    d = np.array([iv.d for iv in iset])
    ii, jj = np.meshgrid(np.arange(eta), np.arange(eta), indexing="ij")
    # row (i, j): N-1 cells hold i, one holds j; j == i is the full match
    rl = np.stack([r_lb[ii], r_lb[jj]], axis=-1)
    ru = np.stack([r_ub[ii], r_ub[jj]], axis=-1)
    bank = switch_bank(iset.design, devices, supply, rl, ru, d[ii][..., None], np.array([n - 1.0, 1.0]))
    c = default_c_ml(n) if c_ml is None else c_ml
    v0 = np.full((eta, eta), initial_ml_voltage(iset.design, supply))
    t, v = integrate_ml(bank.current, v0, c, float(t_samples.max()), v_max=supply.vdd)
    idx = np.clip(np.searchsorted(t, t_samples - 1e-18), 0, t.size - 1)
    vs = v[idx]
    diag = np.arange(eta)
    return DrData(iset.design, t[idx], vs[:, diag, diag], vs)


@dataclass(frozen=True)
class DrResult:
    t: float
    n: int
    v_fm: np.ndarray
    v_1lbmm: np.ndarray  # NaN where the lower neighbour does not exist
    v_1ubmm: np.ndarray
    dr: float


def dr_from_traces(design, v_fm, v_1lbmm, v_1ubmm) -> float:
    """``min(fm) - max(mm)`` for pull-down rows, sign-flipped for 4T2M2S."""
    s = _sign(design)
    mm = np.concatenate([np.ravel(v_1lbmm), np.ravel(v_1ubmm)])
    mm = mm[np.isfinite(mm)]
    if mm.size == 0:
        raise ValueError("no mismatch scenario available")
    if s > 0:
        return float(np.min(v_fm) - np.max(mm))
    return float(np.min(mm) - np.max(v_fm))


def _neighbour_traces(data: DrData, k: int, subset):
    subset = list(subset)
    fm = data.v_fm[k, subset]
    lb = np.full(len(subset), np.nan)
    ub = np.full(len(subset), np.nan)
    for a, i in enumerate(subset):
        if a > 0:
            lb[a] = data.v_mm[k, i, subset[a - 1]]
        if a < len(subset) - 1:
            ub[a] = data.v_mm[k, i, subset[a + 1]]
    return fm, lb, ub


def dynamic_range(iset: IntervalSet, n: int, t: float, devices=None, supply: SupplyConfig | None = None) -> DrResult:
    """Worst-case separation between full match and nearest-neighbour one-mismatch rows."""
    if len(iset) < 2:
        raise ValueError("dynamic range needs at least two intervals")
    data = simulate_dr_data(iset, n, [t], devices, supply)
    fm, lb, ub = _neighbour_traces(data, 0, range(len(iset)))
    return DrResult(t, n, fm, lb, ub, dr_from_traces(iset.design, fm, lb, ub))


def _subset_dr(data: DrData, k: int, subsets: np.ndarray) -> np.ndarray:
    """DR of every subset (rows of sorted indices) at sample ``k``."""
    s = _sign(data.design)
    fm = s * data.v_fm[k][subsets]
    lo, hi = subsets[:, :-1], subsets[:, 1:]
    mm_hi = s * data.v_mm[k][lo, hi]  # cell with the upper neighbour, input d_lo
    mm_lo = s * data.v_mm[k][hi, lo]
    worst = np.maximum(mm_hi.max(axis=1), mm_lo.max(axis=1))
    return fm.min(axis=1) - worst


def candidate_subsets(eta: int, kappa: int) -> np.ndarray:
    """Contiguous windows, plus every subset when the count stays small.

    Larger pools fall back to arithmetic progressions, which contain the
    evenly spread choices that dominate on monotone data.
    """
    if not (2 <= kappa <= eta):
        raise ValueError(f"kappa must lie in [2, {eta}]")
    if math.comb(eta, kappa) <= EXHAUSTIVE_LIMIT:
        return np.array(list(itertools.combinations(range(eta), kappa)), dtype=int)
    cands = set()
    for step in range(1, (eta - 1) // (kappa - 1) + 1):
        for start in range(0, eta - step * (kappa - 1)):
            cands.add(tuple(range(start, start + step * kappa, step)))
    return np.array(sorted(cands), dtype=int)


def best_kappa_dr(data: DrData, kappa: int, t: float | None = None):
    """Highest-DR subset of size ``kappa`` at time ``t`` (default: last sample)."""
    k = data.t.size - 1 if t is None else data.index(t)
    subsets = candidate_subsets(data.eta, kappa)
    drs = _subset_dr(data, k, subsets)
    best = int(np.argmax(drs))  # first maximum, so the earliest subset wins ties
    return tuple(int(x) for x in subsets[best]), float(drs[best])


@dataclass(frozen=True)
class FomResult:
    level: Level | None
    n: int
    kappa: int
    best_t: float
    fom: float
    subset: tuple[int, ...]
    dr: float


def fom_from_curve(t_grid, dr_values):
    """``argmax dr/T``; ties go to the smaller T."""
    t_grid = np.asarray(t_grid, dtype=float)
    ratio = np.asarray(dr_values, dtype=float) / t_grid
    top = ratio.max()
    # ratios equal up to round-off count as ties
    k = int(np.flatnonzero(ratio >= top - 1e-12 * abs(top))[0])
    return float(t_grid[k]), float(ratio[k])


def figure_of_merit(iset: IntervalSet, n: int, kappa: int, t_range=(T_MIN, T_MAX), n_t: int = 40, devices=None,
                    supply: SupplyConfig | None = None, data: DrData | None = None) -> FomResult:
    """Best ``DR_kappa / T`` over a log-spaced sampling-time grid."""
    t_grid = fom_t_grid(t_range, n_t)
    if data is None:
        data = simulate_dr_data(iset, n, t_grid, devices, supply)
    subsets = candidate_subsets(data.eta, kappa)
    best = [(-np.inf, None)] * len(t_grid)
    for k in range(len(t_grid)):
        drs = _subset_dr(data, k, subsets)
        b = int(np.argmax(drs))
        best[k] = (float(drs[b]), tuple(int(x) for x in subsets[b]))
    drs = np.array([b[0] for b in best])
    best_t, fom = fom_from_curve(t_grid, drs)
    k = int(np.argmin(np.abs(t_grid - best_t)))
    return FomResult(iset.level, n, kappa, best_t, fom, best[k][1], float(drs[k]))


def dr_time_curve(iset: IntervalSet, n: int, t_end: float, devices=None, supply: SupplyConfig | None = None):
    """DR(t) of a fixed interval set on the integrator's own time grid."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    eta = len(iset)
    if eta < 2:
        raise ValueError("need at least two intervals")
    pairs = [(i, i) for i in range(eta)] + [(i, i - 1) for i in range(1, eta)] + [(i, i + 1) for i in range(eta - 1)]
    rl = np.array([[iset[i].r_lb, iset[j].r_lb] for i, j in pairs])
    ru = np.array([[iset[i].r_ub, iset[j].r_ub] for i, j in pairs])
    d = np.array([iset[i].d for i, _ in pairs])[:, None]
    bank = switch_bank(iset.design, devices, supply, rl, ru, d, np.array([n - 1.0, 1.0]))
    v0 = np.full(len(pairs), initial_ml_voltage(iset.design, supply))
    t, v = integrate_ml(bank.current, v0, default_c_ml(n), t_end, v_max=supply.vdd)
    s = _sign(iset.design)
    dr = (s * v[:, :eta]).min(axis=1) - (s * v[:, eta:]).max(axis=1)
    return t, dr


def latency_at_dr(iset: IntervalSet, n: int, dr_target: float = 0.1, devices=None, supply: SupplyConfig | None = None,
                  t_max: float = T_MAX) -> float:
    """Earliest evaluate time at which the set's DR reaches ``dr_target``.

    The horizon doubles until the target is met; the crossing is refined by
    bisection on the piecewise-linear waveform between 1 ps samples.
    """
    horizon = min(1e-9, t_max)
    while True:
        t, dr = dr_time_curve(iset, n, horizon, devices, supply)
        hit = first_crossing(t, dr, dr_target)
        if hit is not None:
            return _bisect_crossing(t, dr, dr_target, hit)
        if horizon >= t_max:
            raise DrUnreachable(f"DR peaks at {dr.max() * 1e3:.1f} mV, below {dr_target * 1e3:.0f} mV", float(dr.max()))
        horizon = min(2 * horizon, t_max)


def _bisect_crossing(t, y, target, guess):
    k = int(np.searchsorted(t, guess))
    if k == 0:
        return float(t[0])
    lo, hi = t[k - 1], t[k]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.interp(mid, t, y) >= target:
            hi = mid
        else:
            lo = mid
    return float(hi)


@dataclass(frozen=True)
class FailReport:
    n_runs: int
    v_ref: float
    match_fails: int
    mismatch_fails: int
    n_decisions: int

    @property
    def p_f(self) -> float:
        return (self.match_fails + self.mismatch_fails) / self.n_decisions


def best_reference(v_match, v_mismatch, pulls_down: bool, vdd: float, step: float = 1e-3):
    """Reference on a ``step`` grid over ``[0, vdd]`` minimising total fails.

    Ties resolve to the centre of the best run of grid points.
    """
    grid = np.round(np.arange(0.0, vdd + step / 2, step), 9)
    vm = np.sort(np.ravel(v_match))
    vx = np.sort(np.ravel(v_mismatch))
    if pulls_down:
        match_f = np.searchsorted(vm, grid, side="left")  # match below v_ref
        mism_f = vx.size - np.searchsorted(vx, grid, side="right")  # mismatch above v_ref
    else:
        match_f = vm.size - np.searchsorted(vm, grid, side="right")
        mism_f = np.searchsorted(vx, grid, side="left")
    total = match_f + mism_f
    best = np.flatnonzero(total == total.min())
    # centre of the first contiguous run of optimal points
    run_end = best[0]
    while run_end + 1 < grid.size and total[run_end + 1] == total.min():
        run_end += 1
    k = (best[0] + run_end) // 2
    return float(grid[k]), int(match_f[k]), int(mism_f[k])


def fail_probability(iset: IntervalSet, n: int, t: float, variation: VariationSpec, n_runs: int = 1000, devices=None,
                     supply: SupplyConfig | None = None, stream: int = 7) -> FailReport:
    """Monte Carlo decision failures at sampling time ``t`` with the best reference.

    Each run draws one row of ``n`` cells whose transistors are shared by
    every scenario (the memristors are reprogrammed per scenario).
    """
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    eta = len(iset)
    if eta < 1:
        raise ValueError("empty interval set")
    pairs = [(i, i) for i in range(eta)] + [(i, i - 1) for i in range(1, eta)] + [(i, i + 1) for i in range(eta - 1)]
    n_fm = eta
    rng = variation.rng(stream)
    cd = CellDevices.sampled(devices, iset.design, variation, rng, size=(n_runs, 1, n))
    # cell 0 is the odd cell of each row
    held = np.array([[j] + [i] * (n - 1) for i, j in pairs])
    rl = np.array([iv.r_lb for iv in iset])[held][None]
    ru = np.array([iv.r_ub for iv in iset])[held][None]
    if MemristorMode(variation.memristor_mode) is not MemristorMode.NONE:
        rl = sample_resistance(np.broadcast_to(rl, (n_runs,) + rl.shape[1:]), variation, rng, (n_runs,) + rl.shape[1:])
        ru = sample_resistance(np.broadcast_to(ru, (n_runs,) + ru.shape[1:]), variation, rng, (n_runs,) + ru.shape[1:])
    d = np.array([iset[i].d for i, _ in pairs])[None, :, None]
    bank = switch_bank(iset.design, cd, supply, rl, ru, d, 1.0)
    v0 = np.full((n_runs, len(pairs)), initial_ml_voltage(iset.design, supply))
    _, v = integrate_ml(bank.current, v0, default_c_ml(n), t, v_max=supply.vdd)
    v_end = v[-1]
    v_ref, mf, xf = best_reference(v_end[:, :n_fm], v_end[:, n_fm:], iset.design.pulls_down, supply.vdd)
    return FailReport(n_runs, v_ref, mf, xf, v_end.size)


def intervals_vs_multiplier(design, levels, m_grid, variation: VariationSpec, n_runs: int = 1000, w: float = 0.01,
                            devices=None, supply: SupplyConfig | None = None, r_grid=None):
    """Interval counts per (level, m); ``m = 0`` uses the nominal tables."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    r = default_r_grid() if r_grid is None else r_grid
    design = CellDesign.parse(design)
    table = {}
    for li, level in enumerate(levels):
        level = Level.parse(level)
        stats = {}
        for si, side in enumerate(("LB", "UB")):
            stats[side] = mc_bound_statistics(design, side, r, level, variation, n_runs, devices, supply, stream=100 + 2 * li + si)
        for m in m_grid:
            if m == 0:
                lb = build_lut(design, "LB", r, level, devices, supply)
                ub = build_lut(design, "UB", r, level, devices, supply)
                iset = build_intervals(lb, ub, w, design=design, level=level, vdd=supply.vdd)
            else:
                iset = build_intervals_guarded(guarded_lut(stats["LB"], m, supply), guarded_lut(stats["UB"], m, supply), w, m,
                                               design=design, level=level, vdd=supply.vdd)
            table[(level.label, float(m))] = iset.eta
    return table


def max_multiplier(design, level, target: int, m_grid, variation: VariationSpec, n_runs: int, w: float = 0.01, devices=None,
                   supply: SupplyConfig | None = None, r_grid=None):
    """Largest ``m`` on the grid whose guarded set still holds ``target`` intervals, with that set."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    r = default_r_grid() if r_grid is None else r_grid
    level = Level.parse(level)
    design = CellDesign.parse(design)
    slb = mc_bound_statistics(design, "LB", r, level, variation, n_runs, devices, supply, stream=100)
    sub = mc_bound_statistics(design, "UB", r, level, variation, n_runs, devices, supply, stream=101)
    best = None
    for m in sorted(m_grid):
        iset = build_intervals_guarded(guarded_lut(slb, m, supply), guarded_lut(sub, m, supply), w, m, design=design,
                                       level=level, vdd=supply.vdd)
        if iset.eta >= target:
            best = (float(m), iset)
    return best


def corner_interval_counts(design, level, corners=tuple(Corner), w: float = 0.01, devices=None,
                           supply: SupplyConfig | None = None, r_grid=None):
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    r = default_r_grid() if r_grid is None else r_grid
    level = Level.parse(level)
    out = {}
    for corner in corners:
        dev = devices.with_corner(corner)
        lb = build_lut(design, "LB", r, level, dev, supply)
        ub = build_lut(design, "UB", r, level, dev, supply)
        out[Corner(corner).value] = build_intervals(lb, ub, w, design=design, level=level, vdd=supply.vdd).eta
    return out
