"""Behavioral simulator and design-space explorer for memristive analog CAM cells."""

from .analysis import (
    dynamic_range,
    fail_probability,
    figure_of_merit,
    intervals_vs_multiplier,
    latency_at_dr,
)
from .array import ArrayParasitics, RowConfig, array_latency, compare_energy, ml_transient
from .config import ExperimentConfig, load_config
from .devices import (
    Corner,
    DeviceSet,
    MosParams,
    SupplyConfig,
    TsParams,
    VariationSpec,
)
from .errors import AcamError, ConfigError, DrUnreachable
from .intervals import IntervalSet, build_intervals, validate_interval_set
from .luts import Level, build_lut
from .subcircuits import CellConfig, CellDesign

__version__ = "0.1.0"

__all__ = [
    "AcamError",
    "ArrayParasitics",
    "CellConfig",
    "CellDesign",
    "ConfigError",
    "Corner",
    "DeviceSet",
    "DrUnreachable",
    "ExperimentConfig",
    "IntervalSet",
    "Level",
    "MosParams",
    "RowConfig",
    "SupplyConfig",
    "TsParams",
    "VariationSpec",
    "__version__",
    "array_latency",
    "build_intervals",
    "build_lut",
    "compare_energy",
    "dynamic_range",
    "fail_probability",
    "figure_of_merit",
    "intervals_vs_multiplier",
    "latency_at_dr",
    "load_config",
    "ml_transient",
    "validate_interval_set",
]
