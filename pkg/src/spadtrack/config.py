"""Sensor configuration, config-file I/O and time-gate geometry."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

SPEED_OF_LIGHT = 299_792_458.0

BINS_PER_GATE = 8
COUNTER_MAX = 4095
MAX_GATE_POSITIONS = 128
MAX_TOTAL_BINS = 1024

ARRAY_ROWS = 32
ARRAY_COLS = 64
SPADS_PER_SIDE = 4
SPADS_PER_PIXEL = SPADS_PER_SIDE * SPADS_PER_SIDE

MODES = ("tracking", "continuous_slide", "prescribed")
FIDELITIES = ("fast", "event")


class ConfigError(ValueError):
    """Raised for invalid or inconsistent sensor configuration."""


@dataclass(frozen=True)
class SensorConfig:
    bin_width_s: float = 8e-9
    gate_step_bins: int = 4
    n_gate_positions: int = 16
    alpha: int = 2
    laser_rep_rate_hz: float = 1.2e6
    pulse_fwhm_s: float = 10e-9
    cycles_per_exposure: int = 24_000
    # expected signal photons per exposure, whole macropixel, reflectivity 1 at ref_distance_m
    signal_ref_counts: float = 2000.0
    ref_distance_m: float = 10.0
    pulse_merge_window_s: float = 300e-12
    mode: str = "tracking"
    subexposures_per_frame: int = 1
    fidelity: str = "fast"
    # per-bin width multipliers, for injecting DNL-like distortion
    bin_width_multipliers: tuple[float, ...] = field(default=(1.0,) * BINS_PER_GATE)
    bins_per_gate: int = BINS_PER_GATE

    def __post_init__(self):
        object.__setattr__(
            self, "bin_width_multipliers", tuple(float(m) for m in self.bin_width_multipliers)
        )
        self.validate()

    def validate(self) -> None:
        if self.bins_per_gate != BINS_PER_GATE:
            raise ConfigError("bins_per_gate is fixed at 8")
        if self.bin_width_s <= 0:
            raise ConfigError("bin_width_s must be positive")
        if not 1 <= self.gate_step_bins <= BINS_PER_GATE:
            raise ConfigError("gate_step_bins must lie in [1, 8]")
        if not 1 <= self.n_gate_positions <= MAX_GATE_POSITIONS:
            raise ConfigError("n_gate_positions must lie in [1, 128]")
        if self.total_span_bins > MAX_TOTAL_BINS:
            raise ConfigError(
                f"gated span of {self.total_span_bins} bins exceeds {MAX_TOTAL_BINS}"
            )
        if self.alpha not in (1, 2):
            raise ConfigError("alpha must be 1 or 2")
        if self.laser_rep_rate_hz <= 0:
            raise ConfigError("laser_rep_rate_hz must be positive")
        if self.total_span_s > self.laser_period_s * (1 + 1e-12):
            raise ConfigError(
                f"gated span {self.total_span_s:.3e} s exceeds laser period "
                f"{self.laser_period_s:.3e} s"
            )
        if self.pulse_fwhm_s < 0 or self.pulse_merge_window_s < 0:
            raise ConfigError("pulse widths must be non-negative")
        if self.cycles_per_exposure < 1:
            raise ConfigError("cycles_per_exposure must be >= 1")
        if self.signal_ref_counts < 0 or self.ref_distance_m <= 0:
            raise ConfigError("signal_ref_counts must be >= 0 and ref_distance_m > 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.fidelity not in FIDELITIES:
            raise ConfigError(f"fidelity must be one of {FIDELITIES}")
        if self.subexposures_per_frame < 1:
            raise ConfigError("subexposures_per_frame must be >= 1")
        if len(self.bin_width_multipliers) != BINS_PER_GATE or min(self.bin_width_multipliers) <= 0:
            raise ConfigError("bin_width_multipliers needs 8 positive entries")

    def replace(self, **changes) -> "SensorConfig":
        return dataclasses.replace(self, **changes)

    @property
    def laser_period_s(self) -> float:
        return 1.0 / self.laser_rep_rate_hz

    @property
    def exposure_time_s(self) -> float:
        return self.cycles_per_exposure / self.laser_rep_rate_hz

    @property
    def total_span_bins(self) -> int:
        # last gate starts at (N-1)*step and is 8 bins long
        return (self.n_gate_positions - 1) * self.gate_step_bins + BINS_PER_GATE

    @property
    def total_span_s(self) -> float:
        return self.total_span_bins * self.bin_width_s

    @property
    def pulse_sigma_s(self) -> float:
        return self.pulse_fwhm_s / 2.354820045030949

    def gate_start_s(self, gate_position: int) -> float:
        return gate_position * self.gate_step_bins * self.bin_width_s

    def gate_window_s(self, gate_position: int) -> tuple[float, float]:
        start = self.gate_start_s(gate_position)
        return start, start + BINS_PER_GATE * self.bin_width_s

    def ambient_rate_for_level(self, counts_per_bin: float, n_spads: int = SPADS_PER_PIXEL) -> float:
        """Per-SPAD detected ambient rate giving ``counts_per_bin`` per exposure."""
        return counts_per_bin / (n_spads * self.bin_width_s * self.cycles_per_exposure)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def time_to_range(t_s: float) -> float:
    return SPEED_OF_LIGHT * t_s / 2.0


def range_to_time(d_m: float) -> float:
    return 2.0 * d_m / SPEED_OF_LIGHT


def gate_range_m(config: SensorConfig) -> float:
    """Unambiguous distance range covered by a single time gate."""
    return time_to_range(BINS_PER_GATE * config.bin_width_s)


def total_range_m(config: SensorConfig) -> float:
    """Unambiguous distance range covered by all gate positions."""
    return time_to_range(config.total_span_s)


def gate_for_distance(config: SensorConfig, distance_m: float, target_bin: float = 4.5) -> int:
    """Gate position that puts a return at ``distance_m`` nearest to 1-based bin ``target_bin``.

    Bin ``t`` of a gate spans ``[t-1, t)`` bin widths after the gate start.
    """
    t_bins = range_to_time(distance_m) / config.bin_width_s
    g = round((t_bins - (target_bin - 0.5)) / config.gate_step_bins)
    return int(min(max(g, 0), config.n_gate_positions - 1))


_INT_FIELDS = {f.name for f in dataclasses.fields(SensorConfig) if f.type in ("int",)}
_STR_FIELDS = {"mode", "fidelity"}


def load_config(path: str | Path, section: str = "sensor") -> SensorConfig:
    """Read a :class:`SensorConfig` from an INI-style ``key = value`` file.

    Only the ``[sensor]`` section is read; unknown keys are rejected.
    ``bin_width_multipliers`` is a comma-separated list of 8 floats.
    """
    parser = configparser.ConfigParser()
    path = Path(path)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section(section):
        raise ConfigError(f"{path}: missing [{section}] section")
    return config_from_mapping(dict(parser.items(section)))


def config_from_mapping(values: dict[str, str], base: SensorConfig | None = None) -> SensorConfig:
    known = {f.name for f in dataclasses.fields(SensorConfig)}
    kwargs = {}
    for key, raw in values.items():
        key = key.strip()
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        raw = str(raw).strip()
        try:
            if key in _STR_FIELDS:
                kwargs[key] = raw
            elif key == "bin_width_multipliers":
                kwargs[key] = tuple(float(x) for x in raw.split(","))
            elif key in _INT_FIELDS:
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    base = base or SensorConfig()
    return base.replace(**kwargs)


def dump_config(config: SensorConfig) -> str:
    lines = ["[sensor]"]
    for key, value in config.to_dict().items():
        if key == "bin_width_multipliers":
            value = ",".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(config: SensorConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(config))
