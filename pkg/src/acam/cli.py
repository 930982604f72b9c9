"""Command-line entry point: one subcommand per analysis, CSV plus a run manifest."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis import best_kappa_dr, dynamic_range, intervals_vs_multiplier, simulate_dr_data, corner_interval_counts
from .array import RowConfig, compare_energy, ml_transient, write_trace_csv
from .config import ExperimentConfig, load_config
from .errors import AcamError, ConfigError, DrUnreachable
from .intervals import write_intervals_csv
from .luts import build_lut, default_r_grid
from .pipeline import design_summary, fom_for, latency_table, nominal_intervals
from .subcircuits import CellConfig, vtc_sweep

OUTPUT_ENV = "ACAM_OUTPUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DR = 0, 2, 3, 4


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, (tuple, list)):
        return ";".join(str(x) for x in v)
    return v


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _pairs(cfg: ExperimentConfig):
    return [(d, lvl) for d in cfg.designs for lvl in cfg.levels]


def _tag(design, level) -> str:
    return f"{design.value}_{level.label}"


# --- subcommands ----------------------------------------------------------------------


def cmd_vtc(cfg, out: Path):
    sup = cfg.supply
    grid = np.linspace(0.0, sup.vdd, int(cfg.get("vtc.points")))
    rows = []
    for design in cfg.designs:
        dev = cfg.devices_for(design)
        for r in cfg.get("vtc.r_values"):
            g1, g2 = vtc_sweep(CellConfig(design, r, r), dev, sup, grid)
            rows += [(design.value, float(r), x, a, b) for x, a, b in zip(grid, g1.vg, g2.vg)]
    write_rows(out / "vtc.csv", ["design", "r_ohm", "vdl_v", "vg1_v", "vg2_v"], rows)


def cmd_lut(cfg, out: Path):
    r = default_r_grid(cfg.get("lut.points"))
    rows = []
    for design, level in _pairs(cfg):
        dev = cfg.devices_for(design)
        for side in ("LB", "UB"):
            lut = build_lut(design, side, r, level, dev, cfg.supply)
            rows += [(design.value, level.label, e["side"], e["r_ohm"], e["b_lo_v"], e["b_hi_v"]) for e in lut.rows()]
    write_rows(out / "lut.csv", ["design", "level", "side", "r_ohm", "b_lo_v", "b_hi_v"], rows)


def cmd_intervals(cfg, out: Path):
    for design, level in _pairs(cfg):
        write_intervals_csv(out / f"intervals_{_tag(design, level)}.csv", nominal_intervals(cfg, design, level))


def _middle(cfg, eta):
    choice = cfg.get("row.interval")
    i = eta // 2 if choice == "middle" else int(choice)
    if not 0 <= i < eta:
        raise ConfigError("row.interval", f"index {i} outside 0..{eta - 1}")
    return i


def _scenario_cells(iset, i, n, scenario):
    """Cells of a probe row; the odd cell (index 0) differs in mismatch scenarios."""
    design = iset.design
    if scenario == "fm":
        return [iset[i].cell(design)] * n
    if scenario == "full_mm":
        j = i + 1 if i < len(iset) - 1 else i - 1
        return [iset[j].cell(design)] * n
    j = i - 1 if scenario == "1LBmm" else i + 1
    return [iset[j].cell(design)] + [iset[i].cell(design)] * (n - 1)


def _row_scenarios(iset, i):
    out = ["fm"]
    if i > 0:
        out.append("1LBmm")
    if i < len(iset) - 1:
        out.append("1UBmm")
    return out


def cmd_row(cfg, out: Path):
    n = int(cfg.get("n")[0])
    t_grid = np.linspace(0.0, float(cfg.get("row.t_end")), int(cfg.get("row.points")))
    for design, level in _pairs(cfg):
        iset = nominal_intervals(cfg, design, level)
        i = _middle(cfg, iset.eta)
        dev = cfg.devices_for(design)
        traces = []
        for s in _row_scenarios(iset, i):
            row = RowConfig(design, _scenario_cells(iset, i, n, s))
            traces.append(ml_transient(row, [iset[i].d] * n, t_grid, dev, cfg.supply, scenario=s))
        write_trace_csv(out / f"trace_{_tag(design, level)}.csv", traces)


def cmd_dr(cfg, out: Path):
    t = float(cfg.get("t_eval"))
    kappa = int(cfg.get("kappa"))
    rows = []
    for design, level in _pairs(cfg):
        iset = nominal_intervals(cfg, design, level)
        dev = cfg.devices_for(design)
        for n in cfg.get("n"):
            full = dynamic_range(iset, n, t, dev, cfg.supply)
            sub, dr_k = best_kappa_dr(simulate_dr_data(iset, n, [t], dev, cfg.supply), min(kappa, iset.eta))
            rows.append((design.value, level.label, n, iset.eta, t, full.dr, kappa, dr_k, tuple(sub)))
    write_rows(out / "dr.csv", ["design", "level", "n", "eta", "t_s", "dr_v", "kappa", "dr_kappa_v", "subset"], rows)


def cmd_fom(cfg, out: Path):
    kappa = int(cfg.get("kappa"))
    rows = []
    for design, level in _pairs(cfg):
        iset = nominal_intervals(cfg, design, level)
        if iset.eta < kappa:
            raise DrUnreachable(f"{design.value} holds only {iset.eta} intervals at {level.label}")
        for n in cfg.get("n"):
            fom, _, _ = fom_for(cfg, iset, n, kappa)
            rows.append((design.value, level.label, n, kappa, fom.best_t, fom.dr, fom.fom, tuple(fom.subset)))
    write_rows(out / "fom.csv", ["design", "level", "n", "kappa", "best_t_s", "dr_v", "fom_v_per_s", "subset"], rows)


def cmd_mc(cfg, out: Path):
    rows = []
    for design in cfg.designs:
        table = intervals_vs_multiplier(design, cfg.levels, cfg.get("mc.m_grid"), cfg.variation(),
                                        int(cfg.get("mc.n_runs")), float(cfg.get("w")), cfg.devices_for(design),
                                        cfg.supply, default_r_grid(cfg.get("lut.points")))
        rows += [(design.value, label, m, eta) for (label, m), eta in table.items()]
    write_rows(out / "eta_vs_m.csv", ["design", "level", "m", "eta"], rows)


def cmd_corners(cfg, out: Path):
    rows = []
    for design, level in _pairs(cfg):
        counts = corner_interval_counts(design, level, cfg.get("corners"), float(cfg.get("w")), cfg.devices_for(design),
                                        cfg.supply, default_r_grid(cfg.get("lut.points")))
        rows += [(design.value, level.label, c, eta) for c, eta in counts.items()]
    write_rows(out / "corners.csv", ["design", "level", "corner", "eta"], rows)


def cmd_latency(cfg, out: Path):
    rows = []
    for design, level in _pairs(cfg):
        for cols, lat, achieved, tau, lead in latency_table(cfg, design, level):
            rows.append((design.value, level.label, cols, lat, achieved, tau, lead))
    header = ["design", "level", "n_cols", "latency_s", "max_dr_v", "tau_s", "vdl_lead_tau"]
    write_rows(out / "latency.csv", header, rows)


def cmd_energy(cfg, out: Path):
    t = float(cfg.get("t_eval"))
    rows = []
    for design, level in _pairs(cfg):
        iset = nominal_intervals(cfg, design, level)
        i = _middle(cfg, iset.eta)
        dev = cfg.devices_for(design)
        for n in cfg.get("n"):
            for s in _row_scenarios(iset, i) + ["full_mm"]:
                row = RowConfig(design, _scenario_cells(iset, i, n, s))
                e = compare_energy(row, [iset[i].d] * n, t, dev, cfg.supply, scenario=s)
                rows.append((design.value, level.label, n, s, t, e.precharge, e.evaluate, e.total))
    header = ["design", "level", "n", "scenario", "t_eval_s", "precharge_j", "evaluate_j", "total_j"]
    write_rows(out / "energy.csv", header, rows)


def cmd_summary(cfg, out: Path):
    rows = []
    for design, level in _pairs(cfg):
        for n in cfg.get("n"):
            s = design_summary(cfg, design, level, n)
            rows.append((design.value, level.label, n, s.dr, s.latency, s.energy, s.eta, s.p_f, s.m, s.kappa,
                         s.subset, s.t_dr, s.achieved_dr, s.v_ref))
    header = ["design", "level", "n", "dr_v", "latency_s", "energy_j", "eta", "p_f", "m", "kappa", "subset", "t_dr_s",
              "max_dr_v", "v_ref_v"]
    write_rows(out / "summary.csv", header, rows)


COMMANDS = {
    "vtc": (cmd_vtc, "gate-voltage transfer curves"),
    "lut": (cmd_lut, "bound look-up tables"),
    "intervals": (cmd_intervals, "nominal interval sets"),
    "row": (cmd_row, "match-line waveforms of one row"),
    "dr": (cmd_dr, "dynamic range at t_eval"),
    "fom": (cmd_fom, "figure of merit and best sampling time"),
    "mc": (cmd_mc, "interval count versus guard multiplier"),
    "corners": (cmd_corners, "interval count per process corner"),
    "latency": (cmd_latency, "array latency versus column count"),
    "energy": (cmd_energy, "compare energy per scenario"),
    "summary": (cmd_summary, "per-design comparison table"),
}


# --- plumbing ---------------------------------------------------------------------------


def versions() -> dict:
    return {"acam": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__,
            "python": platform.python_version()}


def write_manifest(out: Path, command: str, cfg: ExperimentConfig):
    files = {p.name: _sha256(p) for p in sorted(out.glob("*.csv"))}
    manifest = {"subcommand": command, "config_hash": cfg.hash, "seed": cfg.seed, "versions": versions(), "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def output_root(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(cfg.get("output_dir"))


def run(command: str, cfg: ExperimentConfig, root: Path) -> Path:
    """Run one subcommand into ``root/<command>``; nothing is left behind on failure."""
    root.mkdir(parents=True, exist_ok=True)
    target = root / command
    stage = Path(tempfile.mkdtemp(prefix=f".{command}-", dir=root))
    try:
        COMMANDS[command][0](cfg, stage)
        write_manifest(stage, command, cfg)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    stage.rename(target)
    return target


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file (default: bundled preset)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field by dotted path, e.g. supply.vdd=0.8")
    common.add_argument("--out", help=f"output directory (else ${OUTPUT_ENV}, else the config's output_dir)")
    ap = argparse.ArgumentParser(prog="acam", description="Analog CAM cell simulator and design-space explorer.")
    ap.add_argument("--version", action="version", version=f"acam {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        target = run(args.command, cfg, output_root(args, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DrUnreachable as exc:
        print(f"dynamic range unreachable: {exc}", file=sys.stderr)
        return EXIT_DR
    except (AcamError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(target)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
