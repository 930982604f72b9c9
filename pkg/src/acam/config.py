"""Experiment configuration: the bundled YAML preset, user files and dotted overrides."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import yaml

from .array import ArrayParasitics
from .devices import R_MAX, R_MIN, DeviceSet, MemristorMode, MosParams, SupplyConfig, TsParams, VariationSpec
from .errors import ConfigError
from .luts import Level
from .subcircuits import CellDesign

#: Keys a user config file must define itself (everything else falls back to the preset).
REQUIRED = ("seed", "supply.vdd", "supply.vpc", "supply.v_sl_hi", "devices", "designs", "levels", "w")

_MOS_ROLES = ("n_div", "n_inv", "p_inv", "n_sw", "p_sw")


def default_dict() -> dict:
    text = resources.files("acam").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def _get(d, dotted):
    cur = d
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise KeyError(dotted)
        cur = cur[part]
    return cur


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(d: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a config dict."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key.path=value")
    path, text = assignment.split("=", 1)
    path = path.strip()
    if not path:
        raise ConfigError(assignment, "empty key path")
    value = yaml.safe_load(text)
    if isinstance(value, str):
        try:
            value = float(value)  # YAML 1.1 reads "1e5" as a string
        except ValueError:
            pass
    out = copy.deepcopy(d)
    cur = out
    parts = path.split(".")
    for part in parts[:-1]:
        if part not in cur or not isinstance(cur[part], dict):
            if part in cur:
                raise ConfigError(path, f"'{part}' is not a section")
            cur[part] = {}
        cur = cur[part]
    cur[parts[-1]] = value
    return out


def _num(d, path, *, positive=False, nonneg=False):
    try:
        v = _get(d, path)
    except KeyError:
        raise ConfigError(path, "missing required field") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be non-negative")
    return float(v)


def _mos(spec: dict, path: str) -> MosParams:
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected a mapping of transistor parameters")
    allowed = {f.name for f in dataclasses.fields(MosParams)}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown transistor parameter")
    try:
        return MosParams(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        cfg = cls(copy.deepcopy(d))
        cfg.validate()
        return cfg

    # --- validation -------------------------------------------------------------
    def validate(self):
        d = self.data
        if not isinstance(d.get("seed"), int) or isinstance(d.get("seed"), bool):
            raise ConfigError("seed", "expected an integer")
        try:
            self.supply
        except ValueError as exc:
            raise ConfigError("supply", str(exc)) from None
        self.base_devices
        for design in d.get("design_devices", {}) or {}:
            self._design(design, "design_devices")
            self.devices_for(design)
        if not d.get("designs"):
            raise ConfigError("designs", "list at least one design")
        for k, tag in enumerate(d["designs"]):
            self._design(tag, f"designs[{k}]")
        if not d.get("levels"):
            raise ConfigError("levels", "list at least one level")
        for k, lvl in enumerate(d["levels"]):
            try:
                Level.parse(str(lvl))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"levels[{k}]", str(exc)) from None
        _num(d, "w", positive=True)
        ns = d.get("n")
        if not isinstance(ns, list) or not ns or any(not isinstance(n, int) or n < 1 for n in ns):
            raise ConfigError("n", "expected a list of positive integers")
        kappa = d.get("kappa")
        if not isinstance(kappa, int) or kappa < 2:
            raise ConfigError("kappa", "expected an integer >= 2")
        _num(d, "t_eval", positive=True)
        _num(d, "dr_target", positive=True)
        tr = d.get("t_range")
        if not (isinstance(tr, list) and len(tr) == 2 and 0 < tr[0] < tr[1]):
            raise ConfigError("t_range", "expected [t_min, t_max] with 0 < t_min < t_max")
        if not isinstance(_get(d, "lut.points"), int) or _get(d, "lut.points") < 3:
            raise ConfigError("lut.points", "expected an integer >= 3")
        for k, r in enumerate(_get(d, "vtc.r_values")):
            if not (R_MIN <= r <= R_MAX):
                raise ConfigError(f"vtc.r_values[{k}]", f"outside [{R_MIN:g}, {R_MAX:g}] ohm")
        _num(d, "mc.sigma_vt", nonneg=True)
        for key in ("mc.n_runs", "mc.fail_runs"):
            v = _get(d, key)
            if not isinstance(v, int) or v < 2:
                raise ConfigError(key, "expected an integer >= 2")
        try:
            MemristorMode(_get(d, "mc.memristor_mode"))
        except ValueError:
            raise ConfigError("mc.memristor_mode", "unknown memristor mode") from None
        for k, m in enumerate(_get(d, "mc.m_grid")):
            if not (0 <= m <= 3):
                raise ConfigError(f"mc.m_grid[{k}]", "multiplier must lie in [0, 3]")
        for tag, m in (_get(d, "mc.m_design") or {}).items():
            self._design(tag, "mc.m_design")
            if not (0 <= m <= 3):
                raise ConfigError(f"mc.m_design.{tag}", "multiplier must lie in [0, 3]")
        _num(d, "mc.t_fail", positive=True)
        for key in ("parasitics.r_seg", "parasitics.c_seg", "parasitics.vdl_lead"):
            _num(d, key, nonneg=True)
        cols = _get(d, "parasitics.cols")
        if not cols or any(not isinstance(c, int) or c < 1 for c in cols):
            raise ConfigError("parasitics.cols", "expected a list of positive integers")
        from .devices import Corner

        for k, c in enumerate(d.get("corners", [])):
            try:
                Corner(c)
            except ValueError:
                raise ConfigError(f"corners[{k}]", f"unknown corner {c!r}") from None

    @staticmethod
    def _design(tag, path):
        try:
            return CellDesign.parse(tag)
        except ValueError:
            raise ConfigError(path, f"unknown design {tag!r}") from None

    # --- typed views ------------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def supply(self) -> SupplyConfig:
        d = self.data
        return SupplyConfig(_num(d, "supply.vdd", positive=True), _num(d, "supply.vpc", positive=True),
                            _num(d, "supply.v_sl_hi", positive=True))

    def _device_set(self, spec: dict, path: str) -> DeviceSet:
        if not isinstance(spec, dict):
            raise ConfigError(path, "expected a mapping of device roles")
        unknown = set(spec) - set(_MOS_ROLES) - {"ts"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown device role")
        kw = {}
        for role in _MOS_ROLES:
            if role not in spec:
                raise ConfigError(f"{path}.{role}", "missing required field")
            kw[role] = _mos(spec[role], f"{path}.{role}")
        ts = spec.get("ts")
        if ts is None:
            raise ConfigError(f"{path}.ts", "missing required field")
        try:
            kw["ts"] = TsParams(**ts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.ts", str(exc)) from None
        return DeviceSet(**kw)

    @property
    def base_devices(self) -> DeviceSet:
        return self._device_set(self.data.get("devices"), "devices")

    def devices_for(self, design) -> DeviceSet:
        design = CellDesign.parse(design)
        extra = (self.data.get("design_devices") or {})
        for tag, spec in extra.items():
            if CellDesign.parse(tag) is design:
                return self._device_set(_merge(self.data["devices"], spec), f"design_devices.{tag}")
        return self.base_devices

    @property
    def designs(self) -> list[CellDesign]:
        return [CellDesign.parse(t) for t in self.data["designs"]]

    @property
    def levels(self) -> list[Level]:
        return [Level.parse(str(x)) for x in self.data["levels"]]

    def variation(self, seed: int | None = None) -> VariationSpec:
        return VariationSpec(sigma_vt=float(_get(self.data, "mc.sigma_vt")),
                             memristor_mode=_get(self.data, "mc.memristor_mode"),
                             seed=self.seed if seed is None else seed)

    def parasitics(self, n_cols: int) -> ArrayParasitics:
        p = self.data["parasitics"]
        return ArrayParasitics(float(p["r_seg"]), float(p["c_seg"]), int(p["n_rows"]), int(n_cols), float(p["vdl_lead"]))

    def m_for(self, design) -> float:
        design = CellDesign.parse(design)
        for tag, m in (_get(self.data, "mc.m_design") or {}).items():
            if CellDesign.parse(tag) is design:
                return float(m)
        return 2.0

    def get(self, dotted):
        return _get(self.data, dotted)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Preset, optionally replaced by a user file (checked for required keys), then overrides."""
    base = default_dict()
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"invalid YAML: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        for key in REQUIRED:
            try:
                _get(user, key)
            except KeyError:
                raise ConfigError(key, "missing required field") from None
        base = _merge(base, user)
    for item in overrides:
        base = apply_override(base, item)
    return ExperimentConfig.from_dict(base)


def preset_devices(design) -> DeviceSet:
    """Transistor set of the shipped preset for one design."""
    return load_config().devices_for(design)
