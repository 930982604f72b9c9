"""Bound look-up tables: nominal bound triples per memristor value and
Monte Carlo guard-banded variants.

Every table stores, per resistance, a match-edge bound ``b_lo`` (gate output
at ``VG_lo``) and a mismatch-edge bound ``b_hi`` (gate output at ``VG_hi``).
For the LB side ``b_hi <= b_lo``; for the UB side ``b_lo <= b_hi``. The 8T2M
lower bound is driven through an inverter into a PMOS switch, so its target
voltages are mirrored about mid-rail and the same ordering holds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .devices import R_MAX, R_MIN, SupplyConfig, VariationSpec, memristor_sigma_rel
from .errors import NoCrossing
from .subcircuits import CellDesign, CellDevices, VtcCurve, vdl_for_g1, vdl_for_g2

VDL_MIN = 0.1
DEFAULT_GRID_POINTS = 500


@dataclass(frozen=True)
class Level:
    """Gate-output cutoff levels as fractions of VDD."""

    p_lo: float
    p_hi: float

    def __post_init__(self):
        if not (0 < self.p_lo <= self.p_hi < 1):
            raise ValueError(f"need 0 < p_lo <= p_hi < 1, got ({self.p_lo}, {self.p_hi})")

    @classmethod
    def parse(cls, text) -> Level:
        """``"40-60"`` or ``(0.4, 0.6)``."""
        if isinstance(text, Level):
            return text
        if isinstance(text, str):
            lo, hi = text.replace("%", "").split("-")
            return cls(float(lo) / 100, float(hi) / 100)
        lo, hi = text
        return cls(float(lo), float(hi))

    @classmethod
    def cutoff(cls, v_cut: float, vdd: float) -> Level:
        return cls(v_cut / vdd, v_cut / vdd)

    @property
    def label(self) -> str:
        return f"{self.p_lo * 100:g}-{self.p_hi * 100:g}"

    def targets(self, design, side: str, vdd: float) -> tuple[float, float]:
        """Gate voltages ``(match edge, mismatch edge)`` for a subcircuit."""
        design = CellDesign.parse(design)
        if side == "LB" and design.g1_increasing:
            return (1 - self.p_lo) * vdd, (1 - self.p_hi) * vdd
        return self.p_lo * vdd, self.p_hi * vdd


@dataclass(frozen=True)
class BoundTriple:
    r: float
    b_lo: float
    b_hi: float
    in_range: bool = True


def default_r_grid(n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.geomspace(R_MIN, R_MAX, n)


def _check_side(side):
    if side not in ("LB", "UB"):
        raise ValueError(f"side must be 'LB' or 'UB', got {side!r}")


def bound_columns(design, side, r, level: Level, devices, supply: SupplyConfig):
    """Vectorized bound extraction; NaN where a level is never reached.

    ``devices`` may be a :class:`DeviceSet` or sampled :class:`CellDevices`
    whose thresholds broadcast against ``r``.
    """
    _check_side(side)
    level = Level.parse(level)
    v_lo, v_hi = level.targets(design, side, supply.vdd)
    invert = vdl_for_g1 if side == "LB" else vdl_for_g2
    b_lo = invert(design, devices, supply, r, v_lo)
    b_hi = invert(design, devices, supply, r, v_hi)
    return b_lo, b_hi


def _in_sweep(v, supply):
    return (v >= VDL_MIN - 1e-12) & (v <= supply.vdd + 1e-12)


def extract_bounds(design, side, r, level, devices, supply: SupplyConfig) -> BoundTriple:
    """Bounds for one memristor value. Raises :class:`NoCrossing` if a level is unreachable."""
    b_lo, b_hi = (float(x) for x in bound_columns(design, side, float(r), level, devices, supply))
    if np.isnan(b_lo) or np.isnan(b_hi):
        raise NoCrossing(f"{side} r={r:g}: level {Level.parse(level).label} unreachable")
    ok = bool(_in_sweep(b_lo, supply) and _in_sweep(b_hi, supply))
    return BoundTriple(float(r), b_lo, b_hi, ok)


def bounds_from_curve(curve: VtcCurve, v_lo: float, v_hi: float, r: float = float("nan")) -> BoundTriple:
    """Bounds read off a sampled monotone VTC by linear interpolation.

    Crossings outside the sampled grid are clipped to the nearest grid end and
    flagged ``in_range=False``; a level the curve never spans raises.
    """
    x = np.asarray(curve.vdl_grid, dtype=float)
    y = np.asarray(curve.vg, dtype=float)
    if y[-1] < y[0]:
        x_inc, y_inc = x[::-1], y[::-1]
    else:
        x_inc, y_inc = x, y
    out = []
    ok = True
    for target in (v_lo, v_hi):
        if target < y_inc[0] or target > y_inc[-1]:
            # extend the end segments linearly to see where the crossing would be
            ok = False
            lo_end = target < y_inc[0]
            xa, xb = (x_inc[0], x_inc[1]) if lo_end else (x_inc[-2], x_inc[-1])
            ya, yb = (y_inc[0], y_inc[1]) if lo_end else (y_inc[-2], y_inc[-1])
            if yb == ya:
                raise NoCrossing(f"curve never reaches {target:g} V")
            xc = xa + (target - ya) * (xb - xa) / (yb - ya)
            out.append(float(np.clip(xc, x.min(), x.max())))
        else:
            out.append(float(np.interp(target, y_inc, x_inc)))
    return BoundTriple(r, out[0], out[1], ok)


@dataclass(frozen=True)
class BoundsLut:
    """Bound triples sorted by resistance, largest first."""

    side: str
    r: np.ndarray
    b_lo: np.ndarray
    b_hi: np.ndarray

    def __post_init__(self):
        _check_side(self.side)
        if not (len(self.r) == len(self.b_lo) == len(self.b_hi)):
            raise ValueError("column lengths differ")
        if len(self.r) > 1 and np.any(np.diff(self.r) >= 0):
            raise ValueError("LUT must be strictly descending in r")

    def __len__(self):
        return len(self.r)

    @property
    def entries(self) -> list[BoundTriple]:
        return [BoundTriple(float(r), float(a), float(b)) for r, a, b in zip(self.r, self.b_lo, self.b_hi)]

    def column(self, which: str) -> np.ndarray:
        if which not in ("b_lo", "b_hi"):
            raise ValueError("which must be 'b_lo' or 'b_hi'")
        return getattr(self, which)

    def value_at(self, which: str, r: float) -> float:
        """Bound at an arbitrary resistance, interpolated in log-r."""
        col = self.column(which)
        lr = np.log(self.r[::-1])
        return float(np.interp(np.log(r), lr, col[::-1]))

    def window_ok(self) -> np.ndarray:
        """Per-entry ordering check (LB: b_hi <= b_lo, UB: b_lo <= b_hi)."""
        if self.side == "LB":
            return self.b_hi <= self.b_lo
        return self.b_lo <= self.b_hi

    def rows(self):
        for r, a, b in zip(self.r, self.b_lo, self.b_hi):
            yield {"side": self.side, "r_ohm": r, "b_lo_v": a, "b_hi_v": b}


@dataclass(frozen=True)
class BoundStats:
    """Per-resistance Monte Carlo statistics of both bounds."""

    side: str
    r: np.ndarray
    mu_lo: np.ndarray
    sigma_lo: np.ndarray
    mu_hi: np.ndarray
    sigma_hi: np.ndarray
    n_runs: int
    n_lost: np.ndarray  # runs per r that lost a crossing or left the sweep range


@dataclass(frozen=True)
class GuardedBoundsLut(BoundsLut):
    m: float = 0.0
    mu_lo: np.ndarray | None = None
    sigma_lo: np.ndarray | None = None
    mu_hi: np.ndarray | None = None
    sigma_hi: np.ndarray | None = None

    def rows(self):
        for i, row in enumerate(super().rows()):
            row.update(
                mu_lo=self.mu_lo[i],
                sigma_lo=self.sigma_lo[i],
                mu_hi=self.mu_hi[i],
                sigma_hi=self.sigma_hi[i],
                m=self.m,
            )
            yield row


def _lut_from_columns(side, r, b_lo, b_hi, supply) -> BoundsLut:
    order = np.argsort(r)[::-1]
    r, b_lo, b_hi = (np.asarray(a, dtype=float)[order] for a in (r, b_lo, b_hi))
    keep = np.isfinite(b_lo) & np.isfinite(b_hi) & _in_sweep(b_lo, supply) & _in_sweep(b_hi, supply)
    return BoundsLut(side, r[keep], b_lo[keep], b_hi[keep])


def build_lut(design, side, r_grid, level, devices, supply: SupplyConfig) -> BoundsLut:
    """All in-range bound triples on ``r_grid``, sorted by descending r."""
    r_grid = np.unique(np.asarray(r_grid, dtype=float))
    b_lo, b_hi = bound_columns(design, side, r_grid, level, devices, supply)
    return _lut_from_columns(side, r_grid, b_lo, b_hi, supply)


def mc_bound_statistics(design, side, r, level, variation: VariationSpec, n_runs: int, devices, supply: SupplyConfig, stream: int = 0) -> BoundStats:
    """Mean and standard deviation of both bounds under random variation.

    One set of device draws is shared by every resistance (common random
    numbers), so the statistics vary smoothly along the r axis. Runs that
    lose a crossing are excluded and counted in ``n_lost``.
    """
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    design = CellDesign.parse(design)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    rng = variation.rng(stream)
    cd = CellDevices.sampled(devices, design, variation, rng, size=n_runs).reshaped((n_runs, 1))
    # one relative memristor draw per run, shared across the r axis
    rel_draw = rng.standard_normal((n_runs, 1))
    r_runs = np.maximum(r[None, :] * (1.0 + memristor_sigma_rel(r, variation.memristor_mode)[None, :] * rel_draw), 1.0)
    b_lo, b_hi = bound_columns(design, side, r_runs, level, cd, supply)
    valid = np.isfinite(b_lo) & np.isfinite(b_hi) & _in_sweep(b_lo, supply) & _in_sweep(b_hi, supply)
    n_ok = valid.sum(axis=0)

    def moments(col):
        # shift by one valid sample so identical runs give exactly zero spread
        ref = np.take_along_axis(col, np.argmax(valid, axis=0)[None], axis=0)
        dev = np.where(valid, col - ref, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            shift = dev.sum(axis=0) / n_ok
            var = (np.where(valid, (dev - shift) ** 2, 0.0)).sum(axis=0) / (n_ok - 1)
        return ref[0] + shift, np.sqrt(var)

    mu_lo, s_lo = moments(b_lo)
    mu_hi, s_hi = moments(b_hi)
    return BoundStats(side, r, mu_lo, s_lo, mu_hi, s_hi, n_runs, n_runs - n_ok)


def guarded_lut(stats: BoundStats, m: float, supply: SupplyConfig = SupplyConfig()) -> GuardedBoundsLut:
    """Guard-banded LUT: bounds shifted by ``m`` sigma to shrink every match window.

    LB: ``b_lo -> mu + m*sigma``, ``b_hi -> mu - m*sigma``.
    UB: ``b_lo -> mu - m*sigma``, ``b_hi -> mu + m*sigma``.
    """
    if not (0 <= m <= 3):
        raise ValueError("m must lie in [0, 3]")
    sign = 1.0 if stats.side == "LB" else -1.0
    b_lo = stats.mu_lo + sign * m * stats.sigma_lo
    b_hi = stats.mu_hi - sign * m * stats.sigma_hi
    order = np.argsort(stats.r)[::-1]
    cols = [np.asarray(a, dtype=float)[order] for a in (stats.r, b_lo, b_hi, stats.mu_lo, stats.sigma_lo, stats.mu_hi, stats.sigma_hi)]
    r, b_lo, b_hi, mu_lo, s_lo, mu_hi, s_hi = cols
    ordered = b_hi <= b_lo if stats.side == "LB" else b_lo <= b_hi
    keep = np.isfinite(b_lo) & np.isfinite(b_hi) & ordered & _in_sweep(b_lo, supply) & _in_sweep(b_hi, supply)
    return GuardedBoundsLut(
        stats.side, r[keep], b_lo[keep], b_hi[keep],
        m=float(m), mu_lo=mu_lo[keep], sigma_lo=s_lo[keep], mu_hi=mu_hi[keep], sigma_hi=s_hi[keep],
    )


def write_lut_csv(path, *luts: BoundsLut):
    rows = [row for lut in luts for row in lut.rows()]
    fields = list(rows[0]) if rows else ["side", "r_ohm", "b_lo_v", "b_hi_v"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def stats_with_zero_variance(lut: BoundsLut) -> BoundStats:
    """Statistics whose mean is the nominal LUT and whose sigma is zero."""
    z = np.zeros_like(lut.r)
    return BoundStats(lut.side, lut.r.copy(), lut.b_lo.copy(), z, lut.b_hi.copy(), z.copy(), 0, z.astype(int))


__all__ = [
    "BoundStats",
    "BoundTriple",
    "BoundsLut",
    "GuardedBoundsLut",
    "Level",
    "bound_columns",
    "bounds_from_curve",
    "build_lut",
    "default_r_grid",
    "extract_bounds",
    "guarded_lut",
    "mc_bound_statistics",
    "stats_with_zero_variance",
    "write_lut_csv",
]
