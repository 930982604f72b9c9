"""End-to-end experiment steps shared by the CLI and the acceptance checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (
    DrData,
    best_kappa_dr,
    candidate_subsets,
    fail_probability,
    figure_of_merit,
    fom_t_grid,
    latency_at_dr,
    simulate_dr_data,
)
from .array import RowConfig, array_latency, compare_energy
from .config import ExperimentConfig
from .errors import DrUnreachable
from .intervals import IntervalSet, build_intervals, build_intervals_guarded
from .luts import Level, build_lut, default_r_grid, guarded_lut, mc_bound_statistics
from .subcircuits import CellDesign


def nominal_intervals(cfg: ExperimentConfig, design, level) -> IntervalSet:
    design = CellDesign.parse(design)
    level = Level.parse(level)
    dev = cfg.devices_for(design)
    sup = cfg.supply
    r = default_r_grid(cfg.get("lut.points"))
    lb = build_lut(design, "LB", r, level, dev, sup)
    ub = build_lut(design, "UB", r, level, dev, sup)
    return build_intervals(lb, ub, float(cfg.get("w")), design=design, level=level, vdd=sup.vdd)


def guarded_intervals(cfg: ExperimentConfig, design, level, m_max: float, target: int, n_runs: int | None = None):
    """Guarded set at the largest grid multiplier ``<= m_max`` that still holds ``target`` intervals.

    Returns ``(m, IntervalSet)``; falls back to the nominal set (``m = 0``).
    """
    design = CellDesign.parse(design)
    level = Level.parse(level)
    dev = cfg.devices_for(design)
    sup = cfg.supply
    r = default_r_grid(cfg.get("lut.points"))
    runs = int(cfg.get("mc.n_runs") if n_runs is None else n_runs)
    var = cfg.variation()
    slb = mc_bound_statistics(design, "LB", r, level, var, runs, dev, sup, stream=100)
    sub = mc_bound_statistics(design, "UB", r, level, var, runs, dev, sup, stream=101)
    grid = sorted({float(m) for m in cfg.get("mc.m_grid") if 0 < m <= m_max} | {float(m_max)}, reverse=True)
    for m in grid:
        iset = build_intervals_guarded(guarded_lut(slb, m, sup), guarded_lut(sub, m, sup), float(cfg.get("w")), m,
                                       design=design, level=level, vdd=sup.vdd)
        if iset.eta >= target:
            return m, iset
    return 0.0, nominal_intervals(cfg, design, level)


@dataclass(frozen=True)
class DesignSummary:
    design: CellDesign
    level: Level
    n: int
    eta: int
    kappa: int
    subset: tuple[int, ...]
    dr: float
    t_dr: float
    fom: float
    fom_t: float
    latency: float
    achieved_dr: float
    energy: float
    m: float
    p_f: float
    v_ref: float


def fom_for(cfg: ExperimentConfig, iset: IntervalSet, n: int, kappa: int):
    t_grid = fom_t_grid(tuple(cfg.get("t_range")))
    t_eval = float(cfg.get("t_eval"))
    dev = cfg.devices_for(iset.design)
    data = simulate_dr_data(iset, n, np.r_[t_grid, t_eval], dev, cfg.supply)
    grid_data = DrData(data.design, data.t[:-1], data.v_fm[:-1], data.v_mm[:-1])
    fom = figure_of_merit(iset, n, kappa, data=grid_data)
    subset, dr = best_kappa_dr(data, kappa)
    return fom, subset, dr


def full_mismatch_energy(cfg: ExperimentConfig, iset: IntervalSet, n: int, t_eval: float) -> float:
    """Mean energy over the set's levels with every cell holding a neighbouring interval."""
    dev = cfg.devices_for(iset.design)
    out = []
    for i in range(len(iset)):
        j = i + 1 if i < len(iset) - 1 else i - 1
        row = RowConfig(iset.design, [iset[j].cell(iset.design)] * n)
        out.append(compare_energy(row, [iset[i].d] * n, t_eval, dev, cfg.supply, scenario="full_mm").total)
    return float(np.mean(out))


def design_summary(cfg: ExperimentConfig, design, level, n: int, *, fail_runs: int | None = None,
                   mc_runs: int | None = None) -> DesignSummary:
    """DR, latency, energy, interval count and failure probability of one design.

    DR is the best kappa-subset at ``t_eval``; latency and energy use the
    figure-of-merit subset, the energy evaluated over that latency window.
    The failure probability uses the guarded set at the design's multiplier.
    """
    design = CellDesign.parse(design)
    level = Level.parse(level)
    kappa = int(cfg.get("kappa"))
    dev = cfg.devices_for(design)
    sup = cfg.supply
    iset = nominal_intervals(cfg, design, level)
    if iset.eta < kappa:
        raise DrUnreachable(f"{design.value} holds only {iset.eta} intervals at {level.label}", float("nan"))
    fom, subset, dr = fom_for(cfg, iset, n, kappa)
    chosen = iset.subset(fom.subset)
    try:
        latency = latency_at_dr(chosen, n, float(cfg.get("dr_target")), dev, sup)
        achieved = float("nan")
        energy = full_mismatch_energy(cfg, chosen, n, latency)
    except DrUnreachable as exc:
        latency, achieved, energy = float("nan"), exc.achieved, float("nan")

    m, gset = guarded_intervals(cfg, design, level, cfg.m_for(design), kappa, mc_runs)
    t_fail = float(cfg.get("mc.t_fail"))
    gdata = simulate_dr_data(gset, n, [t_fail], dev, sup)
    if gset.eta > kappa:
        gsub, _ = best_kappa_dr(gdata, kappa)
        gset = gset.subset(gsub)
    runs = int(cfg.get("mc.fail_runs") if fail_runs is None else fail_runs)
    report = fail_probability(gset, n, t_fail, cfg.variation(), runs, dev, sup)
    return DesignSummary(design, level, n, iset.eta, kappa, tuple(subset), dr, float(cfg.get("t_eval")), fom.fom,
                         fom.best_t, latency, achieved, energy, m, report.p_f, report.v_ref)


def latency_table(cfg: ExperimentConfig, design, level, cols=None, lead: float | None = None):
    """Farthest-row latency per column count for the figure-of-merit kappa-subset."""
    design = CellDesign.parse(design)
    kappa = int(cfg.get("kappa"))
    n_ref = int(cfg.get("n")[0])
    iset = nominal_intervals(cfg, design, level)
    fom, _, _ = fom_for(cfg, iset, n_ref, kappa)
    chosen = iset.subset(fom.subset)
    rows = []
    for c in cols or cfg.get("parasitics.cols"):
        par = cfg.parasitics(c)
        if lead is not None:
            par = type(par)(par.r_seg, par.c_seg, par.n_rows, par.n_cols, lead)
        try:
            res = array_latency(chosen, par, float(cfg.get("dr_target")), cfg.devices_for(design), cfg.supply)
            rows.append((c, res.latency, res.achieved_dr, par.tau, par.vdl_lead))
        except DrUnreachable as exc:
            rows.append((c, float("nan"), exc.achieved, par.tau, par.vdl_lead))
    return rows


__all__ = [
    "DesignSummary",
    "candidate_subsets",
    "design_summary",
    "fom_for",
    "full_mismatch_energy",
    "guarded_intervals",
    "latency_table",
    "nominal_intervals",
]
