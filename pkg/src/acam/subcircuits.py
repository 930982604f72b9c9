"""DC solution of the lower- and upper-bound subcircuits of every cell design.

Lower-bound subcircuit (LBS): memristor ``r_lb`` from VDD to node G1 with an
NMOS pull-down gated by the search voltage. Its raw output falls as VDL rises.
The 10T2M cell adds a two-inverter buffer and the 8T2M cell a single inverter
(which drives a PMOS match-line switch, so its effective G1 rises with VDL).

Upper-bound subcircuit (UBS): the same resistive inverter built on ``r_ub``,
followed by a CMOS inverter powered from SL_HI. Its output G2 rises with VDL
and is steeper than the raw LBS by the inverter gain.

Each forward solve has an exact inverse (VDL for a requested node voltage),
which the LUT builder uses instead of root-finding on sampled curves.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from .devices import (
    R_MAX,
    R_MIN,
    DeviceSet,
    MosParams,
    SupplyConfig,
    TsParams,
    VariationSpec,
    inverter_input,
    inverter_transfer,
    nmos_i,
    sample_variation,
)
from .numerics import bisect_root


class CellDesign(str, enum.Enum):
    D6T2M = "6T2M"
    D10T2M = "10T2M"
    D8T2M = "8T2M"
    D4T2M2S = "4T2M2S"

    @property
    def lbs_chain(self) -> str:
        return {
            CellDesign.D10T2M: "double_inverter",
            CellDesign.D8T2M: "single_inverter",
        }.get(self, "none")

    @property
    def n_chain_inverters(self) -> int:
        return {"none": 0, "single_inverter": 1, "double_inverter": 2}[self.lbs_chain]

    @property
    def ml_switch(self) -> str:
        if self is CellDesign.D8T2M:
            return "pmos_pulldown_active_low"
        if self is CellDesign.D4T2M2S:
            return "ts_pullup"
        return "nmos_pulldown"

    @property
    def g1_increasing(self) -> bool:
        """Whether the effective G1 voltage rises with VDL."""
        return self is CellDesign.D8T2M

    @property
    def pulls_down(self) -> bool:
        return self is not CellDesign.D4T2M2S

    @classmethod
    def parse(cls, tag) -> CellDesign:
        if isinstance(tag, cls):
            return tag
        text = str(tag).upper()
        if text.startswith("D") and text[1:2].isdigit():
            text = text[1:]
        return cls(text)


@dataclass(frozen=True)
class CellConfig:
    design: CellDesign
    r_lb: float
    r_ub: float

    def __post_init__(self):
        object.__setattr__(self, "design", CellDesign.parse(self.design))
        for name in ("r_lb", "r_ub"):
            r = getattr(self, name)
            if not (R_MIN * (1 - 1e-9) <= r <= R_MAX * (1 + 1e-9)):
                raise ValueError(f"{name}={r:g} outside [{R_MIN:g}, {R_MAX:g}] ohm")


@dataclass(frozen=True)
class CellDevices:
    """One cell's transistor instances (each may carry per-sample thresholds)."""

    lbs_n: MosParams
    ubs_n: MosParams
    ubs_inv: tuple[MosParams, MosParams]
    chain: tuple[tuple[MosParams, MosParams], ...]
    t1: MosParams
    t2: MosParams
    ts: TsParams

    @classmethod
    def nominal(cls, devices: DeviceSet, design) -> CellDevices:
        design = CellDesign.parse(design)
        inv = (devices.n_inv, devices.p_inv)
        return cls(
            lbs_n=devices.n_div,
            ubs_n=devices.n_div,
            ubs_inv=inv,
            chain=(inv,) * design.n_chain_inverters,
            t1=devices.p_sw if design is CellDesign.D8T2M else devices.n_sw,
            t2=devices.n_sw,
            ts=devices.ts,
        )

    @classmethod
    def sampled(cls, devices: DeviceSet, design, spec: VariationSpec, rng, size=None) -> CellDevices:
        """Independent threshold draws for every transistor instance of the cell."""
        nom = cls.nominal(devices, design)

        def draw(p):
            return sample_variation(p, spec, rng, size)

        return cls(
            lbs_n=draw(nom.lbs_n),
            ubs_n=draw(nom.ubs_n),
            ubs_inv=(draw(nom.ubs_inv[0]), draw(nom.ubs_inv[1])),
            chain=tuple((draw(n), draw(p)) for n, p in nom.chain),
            t1=draw(nom.t1),
            t2=draw(nom.t2),
            ts=nom.ts,
        )

    def reshaped(self, shape) -> CellDevices:
        """Reshape every array-valued threshold (for broadcasting against grids)."""

        def fix(p):
            if np.ndim(p.vth) == 0:
                return p
            return dataclasses.replace(p, vth=np.reshape(p.vth, shape))

        return CellDevices(
            lbs_n=fix(self.lbs_n),
            ubs_n=fix(self.ubs_n),
            ubs_inv=(fix(self.ubs_inv[0]), fix(self.ubs_inv[1])),
            chain=tuple((fix(n), fix(p)) for n, p in self.chain),
            t1=fix(self.t1),
            t2=fix(self.t2),
            ts=self.ts,
        )


def as_cell_devices(devices, design) -> CellDevices:
    if isinstance(devices, CellDevices):
        return devices
    return CellDevices.nominal(devices, design)


def _resistive_inverter(n: MosParams, supply: SupplyConfig, r, vdl):
    vdl = np.asarray(vdl, dtype=float)
    r = np.asarray(r, dtype=float)

    def balance(v):
        return nmos_i(n, vdl, v) - (supply.vdd - v) / r

    return bisect_root(balance, 0.0, supply.vdd)


def _resistive_inverter_input(n: MosParams, supply: SupplyConfig, r, v_node):
    """VDL at which the resistive inverter node sits at ``v_node``.

    With the node voltage fixed the memristor current is known, so only the
    gate voltage of the pull-down remains to be solved.
    """
    v_node = np.asarray(v_node, dtype=float)
    target = (supply.vdd - v_node) / np.asarray(r, dtype=float)

    def excess(vgs):
        return nmos_i(n, vgs, v_node) - target

    return bisect_root(excess, -1.0, 2.0 * supply.vdd, allow_unbracketed=True)


def solve_lbs_node(devices, supply: SupplyConfig, r_lb, vdl, design=CellDesign.D6T2M):
    """Raw LBS output: ``(vdd - vg1)/r_lb = I_n(vgs=vdl, vds=vg1)``."""
    cd = as_cell_devices(devices, design)
    return _resistive_inverter(cd.lbs_n, supply, r_lb, vdl)


def solve_ubs_internal(devices, supply: SupplyConfig, r_ub, vdl, design=CellDesign.D6T2M):
    """Node between ``r_ub`` and the UBS pull-down (input of the UBS inverter)."""
    cd = as_cell_devices(devices, design)
    return _resistive_inverter(cd.ubs_n, supply, r_ub, vdl)


def solve_ubs_node(devices, supply: SupplyConfig, r_ub, vdl, design=CellDesign.D6T2M):
    """UBS output G2, rising with VDL."""
    cd = as_cell_devices(devices, design)
    raw = _resistive_inverter(cd.ubs_n, supply, r_ub, vdl)
    n, p = cd.ubs_inv
    return inverter_transfer(n, p, supply, raw, rail=supply.v_sl_hi)


def apply_lbs_chain(cd: CellDevices, supply: SupplyConfig, vg1_raw):
    v = vg1_raw
    for n, p in cd.chain:
        v = inverter_transfer(n, p, supply, v)
    return v


def invert_lbs_chain(cd: CellDevices, supply: SupplyConfig, vg1_eff):
    """Raw LBS voltage that the post-processing chain maps onto ``vg1_eff``."""
    v = np.asarray(vg1_eff, dtype=float)
    for n, p in reversed(cd.chain):
        v = inverter_input(n, p, v, supply.vdd)
    return v


def gate_voltages(design, devices, supply: SupplyConfig, r_lb, r_ub, vdl):
    """Array form of :func:`cell_gate_voltages` (resistances broadcast with ``vdl``)."""
    cd = as_cell_devices(devices, design)
    raw = _resistive_inverter(cd.lbs_n, supply, r_lb, vdl)
    vg1 = apply_lbs_chain(cd, supply, raw)
    raw2 = _resistive_inverter(cd.ubs_n, supply, r_ub, vdl)
    n, p = cd.ubs_inv
    vg2 = inverter_transfer(n, p, supply, raw2, rail=supply.v_sl_hi)
    return vg1, vg2


def cell_gate_voltages(cfg: CellConfig, devices, supply: SupplyConfig, vdl):
    """Effective gate drives ``(vg1_eff, vg2)`` of the two match-line switches."""
    return gate_voltages(cfg.design, devices, supply, cfg.r_lb, cfg.r_ub, vdl)


def vdl_for_g1(design, devices, supply: SupplyConfig, r_lb, vg1_eff):
    """Inverse LBS VTC: the VDL producing effective G1 voltage ``vg1_eff`` (NaN if none)."""
    cd = as_cell_devices(devices, design)
    raw = invert_lbs_chain(cd, supply, vg1_eff)
    return _resistive_inverter_input(cd.lbs_n, supply, r_lb, raw)


def vdl_for_g2(design, devices, supply: SupplyConfig, r_ub, vg2):
    """Inverse UBS VTC: the VDL producing G2 voltage ``vg2`` (NaN if none)."""
    cd = as_cell_devices(devices, design)
    n, p = cd.ubs_inv
    raw = inverter_input(n, p, vg2, supply.v_sl_hi)
    return _resistive_inverter_input(cd.ubs_n, supply, r_ub, raw)


@dataclass(frozen=True)
class VtcCurve:
    vdl_grid: np.ndarray
    vg: np.ndarray
    which: str  # "G1" or "G2"

    def __post_init__(self):
        if self.which not in ("G1", "G2"):
            raise ValueError("which must be 'G1' or 'G2'")
        if np.shape(self.vdl_grid) != np.shape(self.vg):
            raise ValueError("vdl_grid and vg lengths differ")


def vtc_sweep(cfg: CellConfig, devices, supply: SupplyConfig, grid):
    """Sampled G1 (effective) and G2 transfer curves over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D array")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    vg1, vg2 = cell_gate_voltages(cfg, devices, supply, grid)
    return VtcCurve(grid, np.asarray(vg1), "G1"), VtcCurve(grid, np.asarray(vg2), "G2")


def gain(curve: VtcCurve) -> float:
    """Peak ``|dVG/dVDL|`` from central differences (one-sided at the ends)."""
    x = np.asarray(curve.vdl_grid, dtype=float)
    y = np.asarray(curve.vg, dtype=float)
    if x.size < 3:
        raise ValueError("gain needs at least three samples")
    return float(np.max(np.abs(np.gradient(y, x))))


def conductance_sensitivity(gain_value: float, ss: float) -> float:
    """Proxy for dG_T/dV_DL: ``(alpha * ss)^-1`` with ``alpha = 1/gain``."""
    if gain_value <= 0 or ss <= 0:
        raise ValueError("gain and ss must be positive")
    return gain_value / ss


def supply_power(design, devices, supply: SupplyConfig, r_lb, r_ub, vdl):
    """Static power drawn from the rails by a cell's dividers and inverters (array form)."""
    cd = as_cell_devices(devices, design)
    vdl = np.asarray(vdl, dtype=float)
    raw1 = _resistive_inverter(cd.lbs_n, supply, r_lb, vdl)
    raw2 = _resistive_inverter(cd.ubs_n, supply, r_ub, vdl)
    power = supply.vdd * ((supply.vdd - raw1) / r_lb + (supply.vdd - raw2) / r_ub)

    n, p = cd.ubs_inv
    vg2 = inverter_transfer(n, p, supply, raw2, rail=supply.v_sl_hi)
    power = power + supply.v_sl_hi * nmos_i(n, raw2, vg2)

    v = raw1
    for n, p in cd.chain:
        out = inverter_transfer(n, p, supply, v)
        power = power + supply.vdd * nmos_i(n, v, out)
        v = out
    return power


def cell_supply_power(cfg: CellConfig, devices, supply: SupplyConfig, vdl):
    return supply_power(cfg.design, devices, supply, cfg.r_lb, cfg.r_ub, vdl)
