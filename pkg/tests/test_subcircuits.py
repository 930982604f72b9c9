import numpy as np
import pytest

from acam.devices import DeviceSet, MosParams, SupplyConfig, inverter_transfer, mos_current
from acam.subcircuits import (
    CellConfig,
    CellDesign,
    VtcCurve,
    cell_gate_voltages,
    cell_supply_power,
    conductance_sensitivity,
    gain,
    solve_lbs_node,
    solve_ubs_internal,
    solve_ubs_node,
    vdl_for_g1,
    vdl_for_g2,
    vtc_sweep,
)

DEV = DeviceSet()
SUP = SupplyConfig()
R_GRID = np.geomspace(5e3, 2.5e6, 50)


def brute_divider(n: MosParams, r, vdl, step=1e-5):
    """Node voltage of a resistor-loaded pull-down by exhaustive scan."""
    v = np.arange(0.0, 0.8 + step, step)
    resid = np.abs(mos_current(n, vdl, v) - (0.8 - v) / r)
    return v[np.argmin(resid)]


def test_design_topology_table():
    assert CellDesign.D6T2M.lbs_chain == "none"
    assert CellDesign.D4T2M2S.lbs_chain == "none"
    assert CellDesign.D10T2M.lbs_chain == "double_inverter"
    assert CellDesign.D8T2M.lbs_chain == "single_inverter"
    assert CellDesign.D8T2M.ml_switch == "pmos_pulldown_active_low"
    assert CellDesign.D4T2M2S.ml_switch == "ts_pullup"
    assert CellDesign.D10T2M.ml_switch == "nmos_pulldown"
    assert CellDesign.parse("d10t2m") is CellDesign.D10T2M


def test_cell_config_range():
    with pytest.raises(ValueError):
        CellConfig("6T2M", 4e3, 1e5)
    with pytest.raises(ValueError):
        CellConfig("6T2M", 1e5, 3e6)


def test_lbs_rail_at_zero_input():
    assert float(solve_lbs_node(DEV, SUP, 100e3, 0.0)) == pytest.approx(0.8, abs=0.01)
    # off-state leakage drops more across larger memristors
    assert float(solve_lbs_node(DEV, SUP, 2.5e6, 0.0)) < float(solve_lbs_node(DEV, SUP, 100e3, 0.0))


def test_lbs_strong_divider_matches_brute_force():
    assert float(solve_lbs_node(DEV, SUP, 5e3, 0.8)) == pytest.approx(brute_divider(DEV.n_div, 5e3, 0.8), abs=2e-5)


def test_ubs_rails():
    assert float(solve_ubs_node(DEV, SUP, 63.1e3, 0.0)) == pytest.approx(0.0, abs=0.01)
    # weak divider: the internal node sits near ground, the inverter pulls G2 to SL_HI
    raw = float(solve_ubs_internal(DEV, SUP, 2.5e6, 0.8))
    assert raw == pytest.approx(brute_divider(DEV.n_div, 2.5e6, 0.8), abs=2e-5)
    oracle = float(inverter_transfer(DEV.n_inv, DEV.p_inv, SUP, raw, rail=SUP.v_sl_hi))
    assert float(solve_ubs_node(DEV, SUP, 2.5e6, 0.8)) == pytest.approx(oracle, abs=1e-6)
    assert oracle > 0.79


def test_vdl_inverse_round_trip():
    for design in CellDesign:
        for r in (10e3, 200e3, 2e6):
            for v in (0.3, 0.5):
                x = float(vdl_for_g1(design, DEV, SUP, r, v))
                g1, _ = cell_gate_voltages(CellConfig(design, r, r), DEV, SUP, x)
                assert float(g1) == pytest.approx(v, abs=1e-5)
                x = float(vdl_for_g2(design, DEV, SUP, r, v))
                _, g2 = cell_gate_voltages(CellConfig(design, r, r), DEV, SUP, x)
                assert float(g2) == pytest.approx(v, abs=1e-5)


@pytest.mark.parametrize("design", list(CellDesign))
def test_vtc_monotone_every_r(design):
    grid = np.linspace(0.1, 0.8, 100)
    for r in R_GRID:
        g1, g2 = vtc_sweep(CellConfig(design, r, r), DEV, SUP, grid)
        d1 = np.diff(g1.vg)
        if design.g1_increasing:
            assert np.all(d1 >= -1e-6)
        else:
            assert np.all(d1 <= 1e-6)
        assert np.all(np.diff(g2.vg) >= -1e-6)


def test_buffer_saturation():
    cfg10 = CellConfig("10T2M", 100e3, 100e3)
    g1, _ = cell_gate_voltages(cfg10, DEV, SUP, 0.8)
    assert float(g1) == pytest.approx(0.0, abs=0.01)
    g1, _ = cell_gate_voltages(CellConfig("8T2M", 100e3, 100e3), DEV, SUP, 0.8)
    assert float(g1) == pytest.approx(0.8, abs=0.01)


def test_buffer_preserves_crossing_side():
    """The double-inverter chain only sharpens the raw LBS curve around its cutoff."""
    grid = np.linspace(0.1, 0.8, 300)
    for r in R_GRID[::7]:
        raw, _ = cell_gate_voltages(CellConfig("6T2M", r, r), DEV, SUP, grid)
        buf, _ = cell_gate_voltages(CellConfig("10T2M", r, r), DEV, SUP, grid)
        # the buffer's trip point maps the raw curve's crossing of the inverter midpoint
        assert np.all(np.sign(raw - 0.4) == np.sign(buf - 0.4))


def test_single_point_sweep_equals_direct_solve():
    cfg = CellConfig("6T2M", 300e3, 50e3)
    g1, g2 = vtc_sweep(cfg, DEV, SUP, [0.3])
    d1, d2 = cell_gate_voltages(cfg, DEV, SUP, 0.3)
    assert g1.vg[0] == pytest.approx(float(d1)) and g2.vg[0] == pytest.approx(float(d2))


def test_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        vtc_sweep(CellConfig("6T2M", 1e5, 1e5), DEV, SUP, [0.3, 0.2])
    with pytest.raises(ValueError):
        VtcCurve(np.arange(3.0), np.arange(2.0), "G1")


def test_gain_of_linear_curve():
    x = np.linspace(0, 0.4, 11)
    assert gain(VtcCurve(x, 2 * x, "G2")) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        gain(VtcCurve(x[:2], x[:2], "G2"))


def test_conductance_sensitivity():
    assert conductance_sensitivity(1, 1) == 1
    assert conductance_sensitivity(4, 90) == pytest.approx(2 * conductance_sensitivity(2, 90))
    assert conductance_sensitivity(3, 1) / conductance_sensitivity(3, 90) == pytest.approx(90)
    with pytest.raises(ValueError):
        conductance_sensitivity(0, 1)


def test_bounds_monotone_in_r():
    lb = vdl_for_g1("6T2M", DEV, SUP, R_GRID, 0.4)
    ub = vdl_for_g2("6T2M", DEV, SUP, R_GRID, 0.4)
    assert np.all(np.diff(lb) < 0)  # larger R_LB -> lower LB
    assert np.all(np.diff(ub) < 0)


def test_static_power_grows_as_memristance_falls():
    lo = cell_supply_power(CellConfig("10T2M", 5e3, 5e3), DEV, SUP, 0.4)
    hi = cell_supply_power(CellConfig("10T2M", 2.5e6, 2.5e6), DEV, SUP, 0.4)
    assert float(lo) > float(hi) > 0
