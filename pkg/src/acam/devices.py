"""Analytic device models: MOSFETs, linear memristors and the threshold switch.

The MOSFET model is a single-expression EKV-style interpolation: the
forward/reverse ``ln^2(1 + exp(.))`` terms reduce to an exponential with
slope ``ss`` below threshold and to the square law above it, so the current
is smooth everywhere and exactly zero at ``vds = 0``. Drain-induced barrier
lowering and channel-length modulation set the finite output resistance,
which in turn caps the voltage gain of the resistive inverters.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .numerics import bisect_root

#: Thermal voltage at 300 K.
UT = 0.025852

R_MIN = 5e3
R_MAX = 2.5e6


@dataclass(frozen=True)
class MosParams:
    """Compact-model parameters of one transistor.

    ``vth`` is the threshold magnitude for either polarity and may be an array
    (one entry per Monte Carlo sample). ``ss`` is the subthreshold swing in
    mV/dec; the ideality factor ``n_slope`` follows from it.
    """

    polarity: str = "n"
    vth: float = 0.4
    k: float = 477e-6  # A/V^2 at unit width
    ss: float = 110.0  # mV/dec
    lam: float = 0.1  # 1/V
    dibl: float = 0.15  # V/V
    i_leak_floor: float = 1e-12  # A at unit width
    width_scale: float = 1.0

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise ValueError(f"polarity must be 'n' or 'p', got {self.polarity!r}")
        if self.ss <= 0 or self.k <= 0 or self.width_scale <= 0:
            raise ValueError("ss, k and width_scale must be positive")

    @property
    def n_slope(self) -> float:
        return self.ss * 1e-3 / (UT * np.log(10.0))

    def scaled(self, factor: float) -> MosParams:
        return dataclasses.replace(self, width_scale=self.width_scale * factor)


@dataclass(frozen=True)
class TsParams:
    """Volatile threshold switch (memoryless, steep log-domain sigmoid)."""

    v_th_ts: float = 0.4
    g_on: float = 8e-6  # R_ON = 125 kOhm
    g_off: float = 1e-9
    ss_ts: float = 1.0  # mV/dec

    def __post_init__(self):
        if not (self.g_on > self.g_off > 0):
            raise ValueError("need g_on > g_off > 0")
        if self.ss_ts <= 0:
            raise ValueError("ss_ts must be positive")


@dataclass(frozen=True)
class SupplyConfig:
    vdd: float = 0.8
    vpc: float = 0.8
    v_sl_hi: float = 0.8

    def __post_init__(self):
        if not (0 < self.vpc <= self.vdd and 0 < self.v_sl_hi <= self.vdd):
            raise ValueError("need 0 < vpc <= vdd and 0 < v_sl_hi <= vdd")


def _channel_current(p: MosParams, vgs, vds):
    n = p.n_slope
    vp = (vgs - (p.vth - p.dibl * vds)) / n
    fwd = np.logaddexp(0.0, vp / (2 * UT)) ** 2
    rev = np.logaddexp(0.0, (vp - vds) / (2 * UT)) ** 2
    drift = 2 * n * p.k * UT**2 * (fwd - rev) * (1 + p.lam * vds)
    leak = p.i_leak_floor * -np.expm1(-vds / UT)
    return (drift + leak) * p.width_scale


def mos_current(params: MosParams, vgs, vds):
    """Drain current magnitude in amperes.

    NMOS takes ``vgs``/``vds`` as usual with ``vds >= 0``. PMOS takes the
    source-referenced values as well (so ``vgs, vds <= 0``); the returned
    current is the source-to-drain magnitude.
    """
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    if not (np.all(np.isfinite(vgs)) and np.all(np.isfinite(vds))):
        raise ValueError("non-finite terminal voltage")
    if params.polarity == "p":
        vgs, vds = -vgs, -vds
    if np.any(vds < -1e-9):
        raise ValueError("reverse drain bias is outside the model's domain")
    return _channel_current(params, vgs, np.maximum(vds, 0.0))


def nmos_i(p: MosParams, vgs, vds):
    """Unchecked fast path for solver inner loops (magnitudes, vds >= 0)."""
    return _channel_current(p, vgs, vds)


def inverter_transfer(nmos: MosParams, pmos: MosParams, supply: SupplyConfig, vin, rail=None):
    """Static CMOS inverter output: the root of ``I_p = I_n`` on ``[0, rail]``."""
    rail = supply.vdd if rail is None else rail
    vin = np.asarray(vin, dtype=float)

    def balance(vout):
        return nmos_i(nmos, vin, vout) - nmos_i(pmos, rail - vin, rail - vout)

    return bisect_root(balance, 0.0, rail)


def inverter_input(nmos: MosParams, pmos: MosParams, vout, rail: float):
    """Input voltage at which the inverter produces ``vout`` (inverse VTC)."""
    vout = np.asarray(vout, dtype=float)

    def balance(vin):
        return nmos_i(nmos, vin, vout) - nmos_i(pmos, rail - vin, rail - vout)

    return bisect_root(balance, 0.0, rail, allow_unbracketed=True)


def ts_conductance(params: TsParams, v_ctrl):
    """Threshold-switch conductance in siemens.

    The log-conductance ramps linearly at ``1/ss_ts`` decades per volt through
    the geometric mean of the rails, centered on ``v_th_ts``, and saturates at
    ``g_off``/``g_on``.
    """
    v_ctrl = np.asarray(v_ctrl, dtype=float)
    lo, hi = np.log10(params.g_off), np.log10(params.g_on)
    slope = 1.0 / (params.ss_ts * 1e-3)
    log_g = np.clip(0.5 * (lo + hi) + slope * (v_ctrl - params.v_th_ts), lo, hi)
    # clip again: 10**log10(g) may round one ulp past the rails
    return np.clip(10.0**log_g, params.g_off, params.g_on)


class Corner(str, enum.Enum):
    TT = "TT"
    SS = "SS"
    FF = "FF"
    SF = "SF"
    FS = "FS"


_CORNER_SKEW = {"S": 0.10, "F": -0.10, "T": 0.0}


def apply_corner(params: MosParams, corner) -> MosParams:
    """Skew ``|vth|`` by +-10 %: first letter is the NMOS speed, second the PMOS."""
    corner = Corner(corner)
    letter = corner.value[0] if params.polarity == "n" else corner.value[1]
    return dataclasses.replace(params, vth=params.vth * (1.0 + _CORNER_SKEW[letter]))


class MemristorMode(str, enum.Enum):
    NONE = "none"
    REL_1PCT = "rel_1pct"
    REL_5PCT = "rel_5pct"
    VALUE_DEPENDENT = "value_dependent"


@dataclass(frozen=True)
class VariationSpec:
    """Random process variation: threshold mismatch plus memristor spread."""

    sigma_vt: float = 0.050 / 3
    memristor_mode: MemristorMode = MemristorMode.NONE
    seed: int = 0

    def __post_init__(self):
        if self.sigma_vt < 0:
            raise ValueError("sigma_vt must be non-negative")
        object.__setattr__(self, "memristor_mode", MemristorMode(self.memristor_mode))

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


def memristor_sigma_rel(r, mode) -> np.ndarray:
    """Relative standard deviation of a programmed resistance."""
    mode = MemristorMode(mode)
    r = np.asarray(r, dtype=float)
    if mode is MemristorMode.NONE:
        return np.zeros_like(r)
    if mode is MemristorMode.REL_1PCT:
        return np.full_like(r, 0.01)
    if mode is MemristorMode.REL_5PCT:
        return np.full_like(r, 0.05)
    # log-linear ramp from 1 % at R_MIN to 30 % at R_MAX, capped at 30 %
    frac = np.log(np.maximum(r, R_MIN) / R_MIN) / np.log(R_MAX / R_MIN)
    return np.minimum(0.01 + 0.29 * frac, 0.30)


def sample_variation(params: MosParams, spec: VariationSpec, rng: np.random.Generator, size=None):
    """Copy of ``params`` with a normally distributed threshold per sample.

    PMOS sigma shrinks with device width (Pelgrom area scaling).
    """
    sigma = spec.sigma_vt
    if params.polarity == "p":
        sigma = sigma / np.sqrt(params.width_scale)
    if sigma == 0:
        return params
    vth = params.vth + sigma * rng.standard_normal(size)
    return dataclasses.replace(params, vth=vth)


def sample_resistance(r, spec: VariationSpec, rng: np.random.Generator, size=None):
    rel = memristor_sigma_rel(r, spec.memristor_mode)
    if np.all(rel == 0):
        return np.broadcast_to(np.asarray(r, dtype=float), np.broadcast(r, np.empty(size or ())).shape).copy()
    draw = np.asarray(r) * (1.0 + rel * rng.standard_normal(size))
    return np.maximum(draw, 1.0)


@dataclass(frozen=True)
class DeviceSet:
    """Every transistor role in a cell, plus the threshold switch.

    ``n_div`` is the pull-down of both resistive inverters; ``n_inv``/``p_inv``
    build every CMOS inverter; ``n_sw``/``p_sw`` are the match-line switches.
    """

    n_div: MosParams = field(default_factory=lambda: MosParams(width_scale=5.0))
    n_inv: MosParams = field(default_factory=MosParams)
    p_inv: MosParams = field(default_factory=lambda: MosParams(polarity="p"))
    n_sw: MosParams = field(default_factory=MosParams)
    p_sw: MosParams = field(default_factory=lambda: MosParams(polarity="p"))
    ts: TsParams = field(default_factory=TsParams)

    def with_corner(self, corner) -> DeviceSet:
        return dataclasses.replace(
            self,
            n_div=apply_corner(self.n_div, corner),
            n_inv=apply_corner(self.n_inv, corner),
            p_inv=apply_corner(self.p_inv, corner),
            n_sw=apply_corner(self.n_sw, corner),
            p_sw=apply_corner(self.p_sw, corner),
        )

    def mos_roles(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "ts"}
