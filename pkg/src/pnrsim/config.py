"""Strict JSON experiment configuration with unit-suffixed keys."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .counting import TimingModel
from .electrothermal import ElectrothermalParams
from .errors import ConfigError, PnrError
from .tagger import TagConfig
from .waveform import FrontendConfig, SourceConfig

# json key -> dataclass attribute, per section
SOURCE_KEYS = {
    "repetition_rate_hz": "repetition_rate",
    "mean_photons": "mean_photons",
    "extinction_ratio_db": "extinction_ratio_db",
    "suppressed_slots_per_main": "suppressed_slots_per_main",
}
TIMING_KEYS = {
    "base_rise_time_seconds": "base_rise_time",
    "exponent": "exponent",
    "jitter_ratio": "jitter_ratio",
    "trigger_fraction": "trigger_fraction",
    "time_offset_seconds": "time_offset",
}
FRONTEND_KEYS = {
    "sample_rate_hz": "sample_rate",
    "amplifier_bandwidth_hz": "amplifier_bandwidth",
    "scope_bandwidth_hz": "scope_bandwidth",
    "pulse_amplitude_volts": "pulse_amplitude",
    "fall_time_constant_seconds": "fall_time_constant",
    "noise_rms_volts": "noise_rms",
    "record_length_samples": "record_length",
}
ELECTROTHERMAL_KEYS = {
    "kinetic_inductance_henries": "kinetic_inductance",
    "load_resistance_ohms": "load_resistance",
    "bias_current_amperes": "bias_current",
    "switching_current_amperes": "switching_current",
    "sheet_resistance_ohms": "sheet_resistance",
    "wire_width_meters": "wire_width",
    "wall_velocity_scale_meters_per_second": "wall_velocity_scale",
    "stekly": "stekly",
    "wall_response_time_seconds": "wall_response_time",
    "seed_domain_length_meters": "seed_domain_length",
    "max_time_seconds": "max_time",
    "time_step_seconds": "time_step",
}
INT_ATTRS = {"suppressed_slots_per_main", "record_length"}


@dataclass(frozen=True)
class PipelineConfig:
    bin_width: float | None = 1e-12
    max_peaks: int = 12

    def __post_init__(self):
        if self.bin_width is not None and not self.bin_width > 0:
            raise ConfigError("pipeline.bin_width_seconds must be > 0 or null")
        if self.max_peaks < 1:
            raise ConfigError("pipeline.max_peaks must be >= 1")


@dataclass(frozen=True)
class SimulationConfig:
    n_events: int = 200_000
    max_slots: int = 10**9

    def __post_init__(self):
        if self.n_events < 1 or self.max_slots < 1:
            raise ConfigError("simulation.n_events and simulation.max_slots must be >= 1")


@dataclass(frozen=True)
class StatsConfig:
    """Grid for the click-probability surfaces and resolution curves."""

    elements: tuple = (2, 16, 1000)
    efficiencies: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    max_photons: int = 10
    jitter_ratios: tuple = (0.01, 0.05)
    max_photon_number: int = 10

    def __post_init__(self):
        if not self.elements or any(n < 1 for n in self.elements):
            raise ConfigError("stats.elements must be positive integers")
        if not self.efficiencies or any(not 0 <= e <= 1 for e in self.efficiencies):
            raise ConfigError("stats.efficiencies must lie in [0, 1]")
        if not self.jitter_ratios or any(not r > 0 for r in self.jitter_ratios):
            raise ConfigError("stats.jitter_ratios must be > 0")
        if self.max_photons < 1 or self.max_photon_number < 1:
            raise ConfigError("stats.max_photons and stats.max_photon_number must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig = field(default_factory=SourceConfig)
    timing: TimingModel = field(default_factory=TimingModel)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    electrothermal: ElectrothermalParams | None = None
    tagging: TagConfig = field(default_factory=TagConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    seed: int = 0
    output_dir: str = "out"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        _check_seed(seed)
        return replace(self, seed=seed, source=replace(self.source, seed=seed))

    def to_dict(self) -> dict:
        return {
            "source": _dump(self.source, SOURCE_KEYS),
            "timing": _dump(self.timing, TIMING_KEYS),
            "frontend": _dump(self.frontend, FRONTEND_KEYS),
            "electrothermal": None if self.electrothermal is None
            else _dump(self.electrothermal, ELECTROTHERMAL_KEYS),
            "tagging": {"trigger_levels_volts": list(self.tagging.trigger_levels)},
            "pipeline": {"bin_width_seconds": self.pipeline.bin_width,
                         "max_peaks": self.pipeline.max_peaks},
            "simulation": {"n_events": self.simulation.n_events,
                           "max_slots": self.simulation.max_slots},
            "stats": {
                "elements": list(self.stats.elements),
                "efficiencies": list(self.stats.efficiencies),
                "max_photons": self.stats.max_photons,
                "jitter_ratios": list(self.stats.jitter_ratios),
                "max_photon_number": self.stats.max_photon_number,
            },
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _dump(obj, keys):
    return {k: getattr(obj, attr) for k, attr in keys.items()}


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")


def _number(section, key, value, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if integer:
        if not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        return value
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key} must be finite")
    return float(value)


def _object(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    return data


def _number_list(section, key, value, integer=False):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{section}.{key} must be a non-empty list")
    return tuple(_number(section, key, v, integer) for v in value)


def _build(section, data, keys, cls, **extra):
    data = _object(section, data, keys)
    kwargs = {keys_attr: _number(section, k, data[k], keys_attr in INT_ATTRS)
              for k, keys_attr in keys.items() if k in data}
    try:
        return cls(**kwargs, **extra)
    except PnrError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


TOP_KEYS = ("source", "timing", "frontend", "electrothermal", "tagging", "pipeline",
            "simulation", "stats", "seed", "output_dir")


def config_from_dict(data) -> ExperimentConfig:
    """Validate a parsed JSON document; missing keys take their defaults."""
    data = _object("config", data, TOP_KEYS)
    seed = data.get("seed", 0)
    _check_seed(seed)
    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")

    et = data.get("electrothermal")
    tagging = _object("tagging", data.get("tagging", {}), ("trigger_levels_volts",))
    pipe = _object("pipeline", data.get("pipeline", {}), ("bin_width_seconds", "max_peaks"))
    sim = _object("simulation", data.get("simulation", {}), ("n_events", "max_slots"))
    st = _object("stats", data.get("stats", {}), ("elements", "efficiencies", "max_photons",
                                                  "jitter_ratios", "max_photon_number"))
    try:
        tag_cfg = TagConfig(_number_list("tagging", "trigger_levels_volts", tagging["trigger_levels_volts"])) \
            if "trigger_levels_volts" in tagging else TagConfig()
    except PnrError as exc:
        raise ConfigError(f"tagging: {exc}") from exc
    bw = pipe.get("bin_width_seconds", PipelineConfig.bin_width)
    pipe_cfg = PipelineConfig(
        None if bw is None else _number("pipeline", "bin_width_seconds", bw),
        _number("pipeline", "max_peaks", pipe.get("max_peaks", PipelineConfig.max_peaks), True),
    )
    sim_cfg = SimulationConfig(
        _number("simulation", "n_events", sim.get("n_events", SimulationConfig.n_events), True),
        _number("simulation", "max_slots", sim.get("max_slots", SimulationConfig.max_slots), True),
    )
    defaults = StatsConfig()
    stats_cfg = StatsConfig(
        _number_list("stats", "elements", st["elements"], True) if "elements" in st else defaults.elements,
        _number_list("stats", "efficiencies", st["efficiencies"]) if "efficiencies" in st
        else defaults.efficiencies,
        _number("stats", "max_photons", st.get("max_photons", defaults.max_photons), True),
        _number_list("stats", "jitter_ratios", st["jitter_ratios"]) if "jitter_ratios" in st
        else defaults.jitter_ratios,
        _number("stats", "max_photon_number", st.get("max_photon_number", defaults.max_photon_number), True),
    )
    return ExperimentConfig(
        source=_build("source", data.get("source", {}), SOURCE_KEYS, SourceConfig, seed=seed),
        timing=_build("timing", data.get("timing", {}), TIMING_KEYS, TimingModel),
        frontend=_build("frontend", data.get("frontend", {}), FRONTEND_KEYS, FrontendConfig),
        electrothermal=None if et is None
        else _build("electrothermal", et, ELECTROTHERMAL_KEYS, ElectrothermalParams),
        tagging=tag_cfg,
        pipeline=pipe_cfg,
        simulation=sim_cfg,
        stats=stats_cfg,
        seed=seed,
        output_dir=output_dir,
    )


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


__all__ = ["ExperimentConfig", "PipelineConfig", "SimulationConfig", "StatsConfig",
           "config_from_dict", "loads_config", "load_config"]
