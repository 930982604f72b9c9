"""Greedy interval building over bound LUTs, plus an independent re-simulation check.

Each interval's match window is ``[LB_lo, LB_lo + W]`` with ``UB_lo = LB_lo + W``.
The next interval starts where its LB forbidden region begins exactly at the
previous UB forbidden region's far edge (``LB_hi(i+1) = UB_hi(i)``), so no
interval can start inside another's forbidden region.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .devices import SupplyConfig
from .errors import OutOfRange
from .luts import BoundsLut, Level
from .subcircuits import CellConfig, CellDesign, cell_gate_voltages


@dataclass(frozen=True)
class Interval:
    idx: int
    r_lb: float
    r_ub: float
    lb: float
    ub: float
    fr_left: tuple[float, float]
    fr_right: tuple[float, float]

    @property
    def d(self) -> float:
        return 0.5 * (self.lb + self.ub)

    def cell(self, design) -> CellConfig:
        return CellConfig(design, self.r_lb, self.r_ub)


@dataclass(frozen=True)
class IntervalSet:
    design: CellDesign
    level: Level | None
    m: float
    w: float
    intervals: tuple[Interval, ...] = field(default_factory=tuple)

    @property
    def eta(self) -> int:
        return len(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def subset(self, indices) -> IntervalSet:
        picked = tuple(self.intervals[i] for i in indices)
        return IntervalSet(self.design, self.level, self.m, self.w, picked)


def find_r_for_bound(lut: BoundsLut, which: str, target: float) -> float:
    """Resistance whose ``which`` bound equals ``target``.

    The column is scanned from the largest resistance; the first bracketing
    pair is interpolated in log-r, so flat stretches resolve to the largest r.
    """
    col = lut.column(which)
    if len(col) == 0:
        raise OutOfRange("empty LUT")
    if col[0] == target:
        return float(lut.r[0])
    hit = np.nonzero(col >= target)[0]
    if target < col[0] or hit.size == 0:
        raise OutOfRange(f"{lut.side}.{which} target {target:.6f} V outside [{col.min():.6f}, {col.max():.6f}]")
    j = int(hit[0])
    a, b = col[j - 1], col[j]
    frac = (target - a) / (b - a)
    lr = np.log(lut.r[j - 1]) + frac * (np.log(lut.r[j]) - np.log(lut.r[j - 1]))
    return float(np.exp(lr))


def build_intervals(lut_lb: BoundsLut, lut_ub: BoundsLut, w: float, *, design=CellDesign.D6T2M,
                    level: Level | None = None, m: float = 0.0, vdd: float = 0.8) -> IntervalSet:
    """Maximal greedy packing of width-``w`` intervals (empty set if none fits)."""
    if w <= 0:
        raise ValueError("interval width must be positive")
    design = CellDesign.parse(design)
    empty = IntervalSet(design, level, m, w, ())
    if len(lut_lb) == 0 or len(lut_ub) == 0:
        return empty

    # the lowest LB_lo whose UB_lo = LB_lo + w is still programmable
    lb_lo = max(float(lut_lb.b_lo[0]), float(lut_ub.b_lo[0]) - w)
    if lb_lo > float(lut_lb.b_lo.max()):
        return empty
    r_lb = find_r_for_bound(lut_lb, "b_lo", lb_lo)
    lb_hi = lut_lb.value_at("b_hi", r_lb)

    out = []
    r_ub_min = float(lut_ub.r[-1])
    while True:
        ub_lo = lb_lo + w
        if ub_lo > vdd:
            break
        try:
            r_ub = find_r_for_bound(lut_ub, "b_lo", ub_lo)
        except OutOfRange:
            break
        ub_hi = lut_ub.value_at("b_hi", r_ub)
        out.append(Interval(len(out), r_lb, r_ub, lb_lo, ub_lo, (lb_hi, lb_lo), (ub_lo, ub_hi)))
        if r_ub <= r_ub_min:
            break
        # next interval: its LB forbidden region starts where this UB one ends
        try:
            r_lb = find_r_for_bound(lut_lb, "b_hi", ub_hi)
        except OutOfRange:
            break
        lb_hi = ub_hi
        lb_lo = lut_lb.value_at("b_lo", r_lb)
        if lb_lo > vdd - w:
            break
    return IntervalSet(design, level, m, w, tuple(out))


def build_intervals_guarded(guarded_lb: BoundsLut, guarded_ub: BoundsLut, w: float, m: float, **kw) -> IntervalSet:
    """Same greedy packing on guard-banded tables."""
    lb_m = getattr(guarded_lb, "m", m)
    ub_m = getattr(guarded_ub, "m", m)
    if not (np.isclose(lb_m, m) and np.isclose(ub_m, m)):
        raise ValueError(f"guarded LUTs were built at m={lb_m}/{ub_m}, not {m}")
    return build_intervals(guarded_lb, guarded_ub, w, m=m, **kw)


def discrete_levels(iset: IntervalSet) -> np.ndarray:
    return np.array([iv.d for iv in iset], dtype=float)


@dataclass(frozen=True)
class Violation:
    i: int  # stored interval (cell)
    j: int  # applied level
    margin: float  # V by which the requirement is missed


@dataclass
class ValidationReport:
    n_checked: int
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_interval_set(iset: IntervalSet, devices, supply: SupplyConfig, level: Level | None = None) -> ValidationReport:
    """Re-simulate every (cell i, input D_j) pair with the forward DC solver.

    ``j == i`` must leave both gate drives on the match side of ``VG_lo``;
    ``j != i`` must push at least one beyond ``VG_hi``. 8T2M G1 is active-low,
    so its sides are mirrored.
    """
    level = Level.parse(level if level is not None else iset.level)
    design = iset.design
    d = discrete_levels(iset)
    vdd = supply.vdd
    g1_lo, g1_hi = level.targets(design, "LB", vdd)
    g2_lo, g2_hi = level.targets(design, "UB", vdd)
    violations = []
    for i, iv in enumerate(iset):
        vg1, vg2 = cell_gate_voltages(iv.cell(design), devices, supply, d)
        vg1 = np.atleast_1d(vg1)
        vg2 = np.atleast_1d(vg2)
        if design.g1_increasing:
            match1 = vg1 - g1_lo  # >= 0 is on the match side
            miss1 = g1_hi - vg1  # >= 0 is a strong mismatch
        else:
            match1 = g1_lo - vg1
            miss1 = vg1 - g1_hi
        match2 = g2_lo - vg2
        miss2 = vg2 - g2_hi
        for j in range(len(d)):
            if j == i:
                margin = min(match1[j], match2[j])
            else:
                margin = max(miss1[j], miss2[j])
            if margin < 0:
                violations.append(Violation(i, j, float(margin)))
    return ValidationReport(len(d) ** 2, violations)


def write_intervals_csv(path, iset: IntervalSet):
    fields = ["idx", "r_lb_ohm", "r_ub_ohm", "lb_v", "ub_v", "d_v", "fr_left_lo", "fr_left_hi", "fr_right_lo", "fr_right_hi"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for iv in iset:
            vals = [iv.r_lb, iv.r_ub, iv.lb, iv.ub, iv.d, *iv.fr_left, *iv.fr_right]
            writer.writerow([iv.idx, *(f"{v:.9g}" for v in vals)])
