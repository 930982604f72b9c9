"""Match-line models: a single row of cells, and a row inside an RC-parasitic array.

Gate voltages are solved quasi-statically from the search input. The match
line is then integrated in time: pull-down designs start precharged to VPC
and leak or discharge through their switches. The 4T2M2S row starts at ground
and is charged from SL_HI through its threshold switches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .devices import DeviceSet, SupplyConfig, nmos_i, ts_conductance
from .errors import DrUnreachable, IntegrationError
from .subcircuits import CellConfig, CellDesign, CellDevices, as_cell_devices, gate_voltages, supply_power

C_PER_CELL = 1e-15
C_SENSE = 10e-15
MAX_DT = 1e-12
MIN_DT = MAX_DT / 16

SCENARIOS = ("fm", "1LBmm", "1UBmm", "full_mm")


def default_c_ml(n_cells: int) -> float:
    return n_cells * C_PER_CELL + C_SENSE


def effective_resistances(r_m, r_mm, n: int):
    """Full-match and one-mismatch resistances of an ``n``-cell row."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (r_m > r_mm > 0):
        raise ValueError("need r_m > r_mm > 0")
    r_fm = r_m / n
    r_1mm = r_m * r_mm / (r_m + (n - 1) * r_mm)
    return r_fm, r_1mm


@dataclass(frozen=True)
class RowConfig:
    design: CellDesign
    cells: tuple[CellConfig, ...]
    c_ml: float | None = None
    cell_devices: tuple[CellDevices, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", CellDesign.parse(self.design))
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("a row needs at least one cell")
        if any(c.design is not self.design for c in self.cells):
            raise ValueError("every cell must share the row's design")
        if self.c_ml is not None and self.c_ml <= 0:
            raise ValueError("c_ml must be positive")
        if self.cell_devices is not None and len(self.cell_devices) != len(self.cells):
            raise ValueError("cell_devices must match cells in length")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def capacitance(self) -> float:
        return default_c_ml(self.n_cells) if self.c_ml is None else self.c_ml

    @property
    def precharge(self) -> str:
        return "to_vpc" if self.design.pulls_down else "to_ground"


@dataclass(frozen=True)
class MatchLineTrace:
    t: np.ndarray
    v_ml: np.ndarray
    scenario: str = "custom"

    def at(self, t):
        return np.interp(t, self.t, self.v_ml)


@dataclass(frozen=True)
class EnergyReport:
    precharge: float
    evaluate: float

    @property
    def total(self) -> float:
        return self.precharge + self.evaluate


@dataclass
class SwitchBank:
    """Match-line switches of a batch of rows, grouped as (row, cell-group).

    ``weight`` counts identical cells per group; ``t1``/``t2`` may carry
    per-entry thresholds broadcastable to ``vg1``.
    """

    design: CellDesign
    vg1: np.ndarray
    vg2: np.ndarray
    weight: np.ndarray
    t1: object
    t2: object
    ts: object
    supply: SupplyConfig

    def branch_currents(self, v_ml):
        """Per-entry switch currents into the match line (negative = pull-down)."""
        v = np.maximum(np.asarray(v_ml, dtype=float), 0.0)[..., None]
        if self.design is CellDesign.D4T2M2S:
            g = ts_conductance(self.ts, self.vg1) + ts_conductance(self.ts, self.vg2)
            return g * (self.supply.v_sl_hi - v)
        if self.design is CellDesign.D8T2M:
            # source at the match line, drain at ground, active-low gate
            i1 = nmos_i(self.t1, v - self.vg1, v)
        else:
            i1 = nmos_i(self.t1, self.vg1, v)
        return -(i1 + nmos_i(self.t2, self.vg2, v))

    def current(self, v_ml):
        return np.sum(self.weight * self.branch_currents(v_ml), axis=-1)


def _cell_arrays(design, devices, supply, r_lb, r_ub, vdl, weight):
    cd = as_cell_devices(devices, design)
    vg1, vg2 = gate_voltages(design, cd, supply, r_lb, r_ub, vdl)
    shape = np.broadcast_shapes(np.shape(vg1), np.shape(weight))
    return SwitchBank(
        design=CellDesign.parse(design),
        vg1=np.broadcast_to(vg1, shape),
        vg2=np.broadcast_to(vg2, shape),
        weight=np.broadcast_to(np.asarray(weight, dtype=float), shape),
        t1=cd.t1,
        t2=cd.t2,
        ts=cd.ts,
        supply=supply,
    )


def switch_bank(design, devices, supply: SupplyConfig, r_lb, r_ub, vdl, weight=1.0) -> SwitchBank:
    """Solve gate voltages for arrays of cells; the last axis groups cells of one row."""
    return _cell_arrays(CellDesign.parse(design), devices, supply, r_lb, r_ub, vdl, weight)


def cell_switch_conductance(cfg: CellConfig, devices, supply: SupplyConfig, vdl, v_ml):
    """Chord conductances ``(g1, g2)`` of the cell's two match-line switches."""
    bank = switch_bank(cfg.design, devices, supply, cfg.r_lb, cfg.r_ub, np.asarray(vdl, dtype=float)[..., None])
    v = np.maximum(np.asarray(v_ml, dtype=float), 1e-6)
    if cfg.design is CellDesign.D4T2M2S:
        return ts_conductance(bank.ts, bank.vg1[..., 0]), ts_conductance(bank.ts, bank.vg2[..., 0])
    if cfg.design is CellDesign.D8T2M:
        i1 = nmos_i(bank.t1, v - bank.vg1[..., 0], v)
    else:
        i1 = nmos_i(bank.t1, bank.vg1[..., 0], v)
    i2 = nmos_i(bank.t2, bank.vg2[..., 0], v)
    return i1 / v, i2 / v


def integrate_ml(current, v0, c_ml: float, t_end: float, dt: float = MAX_DT, *, v_max: float = 0.8, tol: float = 1e-3):
    """Heun (explicit trapezoidal) integration of ``c_ml dV/dt = current(V)``.

    Returns ``(t, v)`` with ``v`` shaped ``(n_t,) + shape(v0)``. A charge
    balance between the accepted states and the trapezoid of their currents
    flags step-size instability; the step is then halved, down to
    ``MIN_DT``, before giving up.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if dt <= 0 or dt > MAX_DT * (1 + 1e-12):
        raise ValueError(f"step must lie in (0, {MAX_DT:g}] s")
    while True:
        try:
            return _heun(current, v0, c_ml, t_end, dt, v_max, tol)
        except IntegrationError:
            if dt / 2 < MIN_DT:
                raise
            dt /= 2


def _heun(current, v0, c_ml, t_end, dt, v_max, tol):
    n = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n
    v0 = np.asarray(v0, dtype=float)
    v = np.empty((n + 1,) + v0.shape)
    i_acc = np.empty_like(v)
    v[0] = v0
    i_k = np.asarray(current(v0), dtype=float)
    i_acc[0] = i_k
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is caught below
        for k in range(n):
            pred = v[k] + h * i_k / c_ml
            v[k + 1] = v[k] + 0.5 * h * (i_k + current(pred)) / c_ml
            i_k = current(v[k + 1])
            i_acc[k + 1] = i_k
    if not np.all(np.isfinite(v)) or v.min() < -1e-3 or v.max() > v_max + 1e-3:
        raise IntegrationError("match-line voltage left the supply range")
    charge = 0.5 * h * np.sum(i_acc[1:] + i_acc[:-1], axis=0)
    stored = c_ml * (v[-1] - v[0])
    scale = np.maximum(np.abs(stored), c_ml * 1e-3)
    if np.any(np.abs(charge - stored) > tol * scale):
        raise IntegrationError("charge balance violated; reduce the step")
    return np.arange(n + 1) * h, v


def initial_ml_voltage(design, supply: SupplyConfig) -> float:
    return supply.vpc if CellDesign.parse(design).pulls_down else 0.0


def ml_transient(row: RowConfig, inputs, t_grid, devices=None, supply: SupplyConfig | None = None, scenario: str = "custom") -> MatchLineTrace:
    """Evaluate-phase match-line waveform of one row for per-cell inputs."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape != (row.n_cells,):
        raise ValueError(f"expected {row.n_cells} inputs, got shape {inputs.shape}")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be non-negative and strictly increasing")

    if row.cell_devices is None:
        r_lb = np.array([c.r_lb for c in row.cells])
        r_ub = np.array([c.r_ub for c in row.cells])
        bank = switch_bank(row.design, devices, supply, r_lb, r_ub, inputs)
        current = bank.current
    else:
        banks = [
            switch_bank(row.design, cd, supply, c.r_lb, c.r_ub, np.array([x]))
            for c, cd, x in zip(row.cells, row.cell_devices, inputs)
        ]

        def current(v):
            return sum(b.current(v) for b in banks)

    v0 = initial_ml_voltage(row.design, supply)
    t_end = float(t_grid[-1])
    if t_end == 0:
        return MatchLineTrace(t_grid, np.full_like(t_grid, v0), scenario)
    t, v = integrate_ml(current, np.float64(v0), row.capacitance, t_end, v_max=supply.vdd)
    return MatchLineTrace(t_grid, np.interp(t_grid, t, v), scenario)


def compare_energy(row: RowConfig, inputs, t_eval: float, devices=None, supply: SupplyConfig | None = None,
                   scenario: str = "custom") -> EnergyReport:
    """Precharge plus evaluate energy drawn from the supplies over ``t_eval``.

    The evaluate part integrates the static divider/inverter power and the
    charge a 4T2M2S row pulls from SL_HI. Pull-down rows only dissipate the
    precharge charge already counted.
    """
    if t_eval <= 0:
        raise ValueError("t_eval must be positive")
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    inputs = np.asarray(inputs, dtype=float)
    c = row.capacitance
    pre = 0.5 * c * supply.vpc**2 if row.design.pulls_down else 0.0

    r_lb = np.array([cc.r_lb for cc in row.cells])
    r_ub = np.array([cc.r_ub for cc in row.cells])
    devs = row.cell_devices or (devices,) * row.n_cells
    p_static = sum(float(supply_power(row.design, d, supply, a, b, x)) for d, a, b, x in zip(devs, r_lb, r_ub, inputs))
    evaluate = p_static * t_eval
    if not row.design.pulls_down:
        trace = ml_transient(row, inputs, np.linspace(0.0, t_eval, 2), devices, supply)
        # all charge on the line came from SL_HI
        evaluate += supply.v_sl_hi * c * (trace.v_ml[-1] - trace.v_ml[0])
    return EnergyReport(pre, evaluate)


# --- scenario rows over an interval set -------------------------------------------


@dataclass(frozen=True)
class ScenarioRow:
    scenario: str
    interval: int  # index of the applied level d_i
    stored: tuple[int, int]  # (interval held by the N-1 matching cells, by the odd cell)
    weights: tuple[float, float]


def scenario_rows(eta: int, n: int, scenarios=("fm", "1LBmm", "1UBmm")) -> list[ScenarioRow]:
    """Rows probed per applied level; one-mismatch rows use the nearest neighbour."""
    rows = []
    for i in range(eta):
        for s in scenarios:
            if s == "fm":
                rows.append(ScenarioRow(s, i, (i, i), (n - 1, 1)))
            elif s == "1LBmm" and i > 0:
                rows.append(ScenarioRow(s, i, (i, i - 1), (n - 1, 1)))
            elif s == "1UBmm" and i < eta - 1:
                rows.append(ScenarioRow(s, i, (i, i + 1), (n - 1, 1)))
            elif s == "full_mm" and eta > 1:
                j = i + 1 if i < eta - 1 else i - 1
                rows.append(ScenarioRow(s, i, (j, j), (n - 1, 1)))
    return rows


def simulate_scenarios(iset, n: int, t_end: float, devices=None, supply: SupplyConfig | None = None,
                       scenarios=("fm", "1LBmm", "1UBmm"), c_ml: float | None = None):
    """Nominal match-line waveforms for every scenario row of an interval set."""
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    rows = scenario_rows(len(iset), n, scenarios)
    r_lb = np.array([[iset[k].r_lb for k in row.stored] for row in rows])
    r_ub = np.array([[iset[k].r_ub for k in row.stored] for row in rows])
    d = np.array([iset[row.interval].d for row in rows])[:, None]
    w = np.array([row.weights for row in rows], dtype=float)
    bank = switch_bank(iset.design, devices, supply, r_lb, r_ub, d, w)
    c = default_c_ml(n) if c_ml is None else c_ml
    v0 = np.full(len(rows), initial_ml_voltage(iset.design, supply))
    t, v = integrate_ml(bank.current, v0, c, t_end, v_max=supply.vdd)
    return rows, t, v


def write_trace_csv(path, traces):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario", "t_s", "v_ml_v"])
        for tr in traces:
            for t, v in zip(tr.t, tr.v_ml):
                writer.writerow([tr.scenario, f"{t:.6e}", f"{v:.9g}"])


# --- parasitic array ----------------------------------------------------------------


@dataclass(frozen=True)
class ArrayParasitics:
    r_seg: float = 1.0
    c_seg: float = 1e-15
    n_rows: int = 16
    n_cols: int = 16
    vdl_lead: float = 5.0  # multiples of tau

    def __post_init__(self):
        if min(self.r_seg, self.c_seg, self.vdl_lead) < 0:
            raise ValueError("parasitics and lead must be non-negative")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("array needs at least one row and one column")

    @property
    def tau(self) -> float:
        """RC constant of the data-line feed to the farthest row."""
        return (self.n_rows * self.r_seg) * (self.n_rows * self.c_seg)


def dl_step_response(n_rows: int, r_seg: float, c_seg: float):
    """Unit-step response at the last node of an ``n_rows``-segment RC line.

    Solved exactly by diagonalising the (symmetric) ladder; returns a callable
    of time, which is zero for ``t <= 0``.
    """
    if r_seg == 0 or c_seg == 0:
        return lambda t: np.where(np.asarray(t) >= 0, 1.0, 0.0)
    diag = np.full(n_rows, 2.0)
    diag[-1] = 1.0
    lam, q = eigh_tridiagonal(diag, -np.ones(n_rows - 1))
    rates = lam / (r_seg * c_seg)
    weights = q[-1, :] * (q.T @ np.ones(n_rows))

    def response(t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 0.0)[..., None]
        out = 1.0 - np.sum(weights * np.exp(-rates * tt), axis=-1)
        return np.where(t > 0, np.clip(out, 0.0, 1.0), 0.0)

    return response


def _gate_tables(design, devices, supply, r_lb, r_ub, v_final, n_grid=401):
    """Gate voltages on a VDL grid from 0 to each row's final input (shape B, G, n_grid)."""
    frac = np.linspace(0.0, 1.0, n_grid)
    vdl = v_final[:, None, None] * frac
    vg1, vg2 = gate_voltages(design, devices, supply, r_lb[..., None], r_ub[..., None], vdl)
    return frac, np.broadcast_to(vg1, vdl.shape[:1] + r_lb.shape[1:] + (n_grid,)), np.broadcast_to(vg2, vdl.shape[:1] + r_lb.shape[1:] + (n_grid,))


def _interp_rows(x, frac, table):
    """Linear lookup of ``table[..., :]`` on the uniform grid ``frac`` at ``x`` (one value per row)."""
    pos = np.clip(x, 0.0, 1.0) * (frac.size - 1)
    lo = np.minimum(pos.astype(int), frac.size - 2)
    a = (pos - lo)[:, None]
    idx = lo[:, None, None]
    left = np.take_along_axis(table, idx, axis=-1)[..., 0]
    right = np.take_along_axis(table, idx + 1, axis=-1)[..., 0]
    return left * (1 - a) + right * a


def ladder_transient(design, devices, supply: SupplyConfig, r_lb, r_ub, v_in, odd_cell_node: int,
                     par: ArrayParasitics, t_end: float, dt: float = MAX_DT):
    """Match line of the farthest row as an ``n_cols``-node RC ladder.

    ``r_lb``/``r_ub``/``v_in`` are shaped (B, 2): column 0 is the configuration
    shared by matching cells, column 1 the odd cell placed at node
    ``odd_cell_node``. The data lines settle through the row feed ladder, with
    the step launched ``vdl_lead * tau`` before evaluation. Integration is
    linearised backward Euler (the ladder is far stiffer than the row).
    Returns ``(t, v_sense)`` with ``v_sense`` shaped (n_t, B).
    """
    design = CellDesign.parse(design)
    cd = as_cell_devices(devices, design)
    m = par.n_cols
    b = r_lb.shape[0]
    group = np.zeros(m, dtype=int)
    group[odd_cell_node] = 1

    step = dl_step_response(par.n_rows, par.r_seg, par.c_seg)
    lead = par.vdl_lead * par.tau
    frac, tab1, tab2 = _gate_tables(design, cd, supply, r_lb, r_ub, v_in[:, 0])
    # both groups see the same data-line fraction; tables are per (row, group)
    c_node = np.full(m, C_PER_CELL + par.c_seg)
    c_node[-1] += C_SENSE
    g_seg = 0.0 if (par.r_seg == 0 or m == 1) else 1.0 / par.r_seg
    g_diag = np.zeros(m)
    if g_seg:
        g_diag[:] = 2 * g_seg
        g_diag[[0, -1]] = g_seg

    # fine steps while the data line is still moving
    settle = max(0.0, 12 * par.tau - lead)
    fine = min(dt, par.tau / 10) if par.tau > 0 else dt
    times = [0.0]
    t = 0.0
    while t < t_end - 1e-18:
        h = fine if t < settle else dt
        t = min(t + h, t_end)
        times.append(t)
    times = np.array(times)

    v = np.full((b, m), initial_ml_voltage(design, supply))
    out = np.empty((times.size, b))
    out[0] = v[:, -1]
    eps = 1e-6
    for k in range(1, times.size):
        h = times[k] - times[k - 1]
        x = step(times[k] + lead)
        vg1 = _interp_rows(np.full(b, float(x)), frac, tab1)[:, group]
        vg2 = _interp_rows(np.full(b, float(x)), frac, tab2)[:, group]
        bank = SwitchBank(design, vg1, vg2, np.ones((b, m)), cd.t1, cd.t2, cd.ts, supply)
        i0 = _node_currents(bank, v)
        di = (_node_currents(bank, v + eps) - i0) / eps
        for r in range(b):
            ab = np.zeros((3, m))
            ab[1] = c_node / h - di[r] + g_diag
            ab[0, 1:] = -g_seg
            ab[2, :-1] = -g_seg
            rhs = c_node / h * v[r] + i0[r] - di[r] * v[r]
            v[r] = solve_banded((1, 1), ab, rhs)
        out[k] = v[:, -1]
    return times, out


def _node_currents(bank: SwitchBank, v):
    """Per-node switch current into the line for node voltages ``v`` (B, M)."""
    vv = np.maximum(v, 0.0)
    if bank.design is CellDesign.D4T2M2S:
        g = ts_conductance(bank.ts, bank.vg1) + ts_conductance(bank.ts, bank.vg2)
        return g * (bank.supply.v_sl_hi - vv)
    if bank.design is CellDesign.D8T2M:
        i1 = nmos_i(bank.t1, vv - bank.vg1, vv)
    else:
        i1 = nmos_i(bank.t1, bank.vg1, vv)
    return -(i1 + nmos_i(bank.t2, bank.vg2, vv))


@dataclass(frozen=True)
class LatencyResult:
    latency: float
    n_cols: int
    tau: float
    lead: float
    achieved_dr: float = field(default=float("nan"))


def dr_curve(design, t, v_by_row, rows):
    """DR(t) from scenario waveforms (pull-down: min fm - max mismatch)."""
    fm = np.array([r.scenario == "fm" for r in rows])
    sign = 1.0 if CellDesign.parse(design).pulls_down else -1.0
    v = sign * v_by_row
    return v[:, fm].min(axis=1) - v[:, ~fm].max(axis=1)


def first_crossing(t, y, target):
    """Earliest time at which the sampled curve reaches ``target`` (linear between samples)."""
    hit = np.nonzero(y >= target)[0]
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return float(t[0])
    a, b = y[k - 1], y[k]
    return float(t[k - 1] + (target - a) / (b - a) * (t[k] - t[k - 1]))


def array_latency(iset, par: ArrayParasitics, dr_target: float = 0.1, devices=None, supply: SupplyConfig | None = None,
                  t_max: float = 10e-9) -> LatencyResult:
    """Smallest evaluate time at which the farthest row reaches ``dr_target``.

    The odd (mismatching) cell sits at the far end of the match line from
    the sense node.
    """
    devices = DeviceSet() if devices is None else devices
    supply = SupplyConfig() if supply is None else supply
    if par.r_seg == 0 and par.c_seg == 0:
        rows, t, v = simulate_scenarios(iset, par.n_cols, t_max, devices, supply)
    else:
        rows = scenario_rows(len(iset), par.n_cols)
        r_lb = np.array([[iset[k].r_lb for k in row.stored] for row in rows])
        r_ub = np.array([[iset[k].r_ub for k in row.stored] for row in rows])
        v_in = np.array([[iset[row.interval].d] * 2 for row in rows])
        # fm rows: the odd cell holds the same interval, so its placement is moot
        t, v = None, None
        horizon = min(2e-9, t_max)
        while True:
            t, v = ladder_transient(iset.design, devices, supply, r_lb, r_ub, v_in, 0, par, horizon)
            dr = dr_curve(iset.design, t, v, rows)
            if first_crossing(t, dr, dr_target) is not None or horizon >= t_max:
                break
            horizon = min(2 * horizon, t_max)
    dr = dr_curve(iset.design, t, v, rows)
    lat = first_crossing(t, dr, dr_target)
    if lat is None:
        raise DrUnreachable(f"DR peaks at {dr.max() * 1e3:.1f} mV below the {dr_target * 1e3:.0f} mV target", float(dr.max()))
    return LatencyResult(lat, par.n_cols, par.tau, par.vdl_lead * par.tau, float(dr.max()))
