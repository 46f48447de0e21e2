"""The 64 x 32 macropixel array stepped frame by frame.

Random streams are keyed by ``(seed, frame, subexposure, row)`` for the fast
model and additionally by column for the event-level model, so any subset of
rows can be simulated on its own and gives the same answer as the full array.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cmm import cmm_fixed_batch, cmm_reference_batch, position_to_depth
from .config import ARRAY_COLS, ARRAY_ROWS, COUNTER_MAX, SensorConfig
from .outputs import ArrayOutputs
from .pixel import GATE_MODES, NO_B, GateMode, Status, step_exposure_batch
from .pwl import DEFAULT_TABLE, PwlSegmentTable
from .readout import OutputFormat
from .scene import SceneFrame, ScenePixel, to_macropixels
from .sim import (event_level_exposure, expected_bin_counts_batch, sample_counts, signal_per_spad,
                  stream_rng)

SHAPE = (ARRAY_ROWS, ARRAY_COLS)


@dataclass
class ArrayState:
    gate: np.ndarray
    latched_b: np.ndarray
    status: np.ndarray
    refresh_b: np.ndarray
    frame: int = 0
    mode: OutputFormat = OutputFormat.HISTOGRAM
    prescribed: np.ndarray | None = None

    @classmethod
    def initial(cls, config: SensorConfig, start_gate=0, mode: OutputFormat | str = OutputFormat.HISTOGRAM,
                prescribed=None) -> "ArrayState":
        gate = np.broadcast_to(np.asarray(start_gate, np.int64), SHAPE).copy()
        if prescribed is not None:
            prescribed = np.broadcast_to(np.asarray(prescribed, np.int64), SHAPE).copy()
        state = cls(
            gate=gate,
            latched_b=np.full(SHAPE, NO_B, np.int64),
            status=np.full(SHAPE, int(Status.SEARCHING), np.int64),
            refresh_b=np.ones(SHAPE, bool),
            mode=OutputFormat(mode),
            prescribed=prescribed,
        )
        state.validate(config)
        return state

    def validate(self, config: SensorConfig) -> None:
        n = config.n_gate_positions
        if np.any((self.gate < 0) | (self.gate >= n)):
            raise ValueError("gate positions out of range")
        if self.prescribed is not None and np.any((self.prescribed < 0) | (self.prescribed >= n)):
            raise ValueError("prescribed gates out of range")

    def copy(self) -> "ArrayState":
        return replace(
            self,
            gate=self.gate.copy(),
            latched_b=self.latched_b.copy(),
            status=self.status.copy(),
            refresh_b=self.refresh_b.copy(),
            prescribed=None if self.prescribed is None else self.prescribed.copy(),
        )


def set_mode(state: ArrayState, mode: OutputFormat | str) -> ArrayState:
    """Switch the operating/readout mode; gates, latched B and status are untouched."""
    new = state.copy()
    new.mode = OutputFormat(mode)
    return new


@dataclass
class FrameResult:
    outputs: ArrayOutputs
    h_max: np.ndarray
    background_b: np.ndarray
    exposures: np.ndarray
    cmm_position: np.ndarray  # full-precision centre of mass, NaN when flat

    def depth_m(self, config: SensorConfig, zero_offset_bins: float = -0.5) -> np.ndarray:
        """Per-pixel depth from the full-precision centre of mass (NaN where invalid)."""
        return position_to_depth(self.cmm_position, self.outputs.gate, config, zero_offset_bins)


class _SceneCache:
    """Macropixel views of a scene, computed once per frame."""

    def __init__(self, scene: SceneFrame):
        self.depth = scene.macropixel_view("depth_m")
        self.refl = scene.macropixel_view("reflectivity")
        self.amb = scene.macropixel_view("ambient_rate")
        self.enable = scene.macropixel_view("spad_enable")

    def pixel(self, r: int, c: int) -> ScenePixel:
        return ScenePixel(self.depth[r, c], self.refl[r, c], self.amb[r, c], self.enable[r, c])


def simulate_histograms(scene: SceneFrame | _SceneCache, config: SensorConfig, gates: np.ndarray,
                        seed: int, frame: int, sub: int = 0, rows=None):
    """Histograms for every pixel (or only ``rows``) at the given gates.

    Returns ``(bins, overflow)`` with shapes ``(n_rows, 64, 8)`` and ``(n_rows, 64)``.
    """
    cache = scene if isinstance(scene, _SceneCache) else _SceneCache(scene)
    rows = range(ARRAY_ROWS) if rows is None else list(rows)
    bins = np.zeros((len(rows), ARRAY_COLS, 8), np.int64)
    overflow = np.zeros((len(rows), ARRAY_COLS), bool)
    for i, r in enumerate(rows):
        if config.fidelity == "event":
            for c in range(ARRAY_COLS):
                h = event_level_exposure(cache.pixel(r, c), config, int(gates[r, c]),
                                         stream_rng(seed, frame, sub, r, c))
                bins[i, c] = h.bins
                overflow[i, c] = h.overflow
        else:
            lam = expected_bin_counts_batch(cache.depth[r], cache.refl[r], cache.amb[r],
                                            cache.enable[r], config, gates[r])
            bins[i], overflow[i] = sample_counts(lam, stream_rng(seed, frame, sub, r))
    return bins, overflow


def step_frame(state: ArrayState, scene: SceneFrame, config: SensorConfig, seed: int = 0,
               table: PwlSegmentTable = DEFAULT_TABLE) -> tuple[ArrayState, FrameResult]:
    """Advance the whole array by one frame.

    Every pixel runs one exposure. Pixels that were not locked at the start of
    the frame keep running further subexposures (up to
    ``subexposures_per_frame``) until they lock. Each subexposure is a full
    capture/detect/update cycle; histograms are not accumulated across them.
    """
    if state.mode is OutputFormat.INTENSITY:
        return _intensity_step(state, scene, config, seed)

    mode = GATE_MODES[config.mode]
    new = state.copy()
    if mode == GateMode.PRESCRIBED and new.prescribed is not None:
        new.gate = new.prescribed.copy()
    start_gate = new.gate.copy()
    locked_at_start = new.status == Status.LOCKED
    cache = _SceneCache(scene)

    bins = np.zeros(SHAPE + (8,), np.int64)
    overflow = np.zeros(SHAPE, bool)
    flag = np.zeros(SHAPE, bool)
    peak_id = np.ones(SHAPE, np.int64)
    h_max = np.zeros(SHAPE, np.int64)
    b_used = np.zeros(SHAPE, np.int64)
    exposures = np.zeros(SHAPE, np.int64)
    active = np.ones(SHAPE, bool)
    cap_gate = start_gate.copy()

    for sub in range(config.subexposures_per_frame):
        if sub > 0:
            active = active & ~locked_at_start & (new.status != Status.LOCKED)
            if not active.any():
                break
        capture_gate = new.gate.copy()
        b_sub, o_sub = simulate_histograms(cache, config, capture_gate, seed, state.frame, sub)
        r = step_exposure_batch(new.gate, new.latched_b, new.status, new.refresh_b, b_sub, o_sub,
                                config.alpha, config.n_gate_positions, table, mode, new.prescribed)
        a = active
        new.gate = np.where(a, r.gate, new.gate)
        new.latched_b = np.where(a, r.latched_b, new.latched_b)
        new.status = np.where(a, r.status, new.status)
        new.refresh_b = np.where(a, r.refresh_b, new.refresh_b)
        cap_gate = np.where(a, capture_gate, cap_gate)
        bins = np.where(a[..., None], b_sub, bins)
        overflow = np.where(a, o_sub, overflow)
        flag = np.where(a, r.flag, flag)
        peak_id = np.where(a, r.peak_id, peak_id)
        h_max = np.where(a, r.h_max, h_max)
        b_used = np.where(a, r.background_b, b_used)
        exposures += a

    eighths, valid = cmm_fixed_batch(bins)
    # the readout reports the gate each histogram was captured at
    outputs = ArrayOutputs(
        gate=cap_gate,
        peak_flag=flag,
        peak_id=peak_id,
        overflow=overflow,
        bins=bins,
        cmm_code=np.where(valid, eighths - 8, 0),
        cmm_valid=valid,
        gate_changed=new.gate != start_gate,
    )
    new.frame = state.frame + 1
    return new, FrameResult(outputs, h_max, b_used, exposures, cmm_reference_batch(bins))


@dataclass
class IntensityFrame:
    counts: np.ndarray  # (128, 128) pair counters

    def __post_init__(self):
        if self.counts.shape != (128, 128):
            raise ValueError("intensity frames are 128 x 128")
        if self.counts.min() < 0 or self.counts.max() > COUNTER_MAX:
            raise ValueError("counts must lie in [0, 4095]")

    def macropixel_counters(self) -> np.ndarray:
        """Counters as ``(32, 64, 8)``; counter ``k`` is pair row ``k // 2``, pair column ``k % 2``."""
        v = self.counts.reshape(ARRAY_ROWS, 4, ARRAY_COLS, 2)
        return v.transpose(0, 2, 1, 3).reshape(ARRAY_ROWS, ARRAY_COLS, 8)

    @classmethod
    def from_counters(cls, counters: np.ndarray) -> "IntensityFrame":
        v = np.asarray(counters).reshape(ARRAY_ROWS, ARRAY_COLS, 4, 2).transpose(0, 2, 1, 3)
        return cls(v.reshape(128, 128).astype(np.int64))


def intensity_frame(scene: SceneFrame, config: SensorConfig, seed: int = 0, frame: int = 0,
                    include_signal: bool = False) -> IntensityFrame:
    """Photon-counting mode: each counter integrates one horizontal SPAD pair.

    Only ambient light is counted unless ``include_signal`` adds the laser
    return of every enabled SPAD.
    """
    rate = scene.ambient_rate * scene.spad_enable
    lam = rate * config.exposure_time_s
    if include_signal:
        lam = lam + signal_per_spad(config, scene.depth_m, scene.reflectivity) * scene.spad_enable
    pair = lam[:, 0::2] + lam[:, 1::2]  # (128, 128)
    counts = np.zeros((128, 128), np.int64)
    for r in range(ARRAY_ROWS):
        rows = slice(4 * r, 4 * r + 4)
        raw = stream_rng(seed, frame, 0, r).poisson(pair[rows])
        counts[rows] = np.minimum(raw, COUNTER_MAX)
    return IntensityFrame(counts)


def _intensity_step(state: ArrayState, scene: SceneFrame, config: SensorConfig, seed: int):
    frame = intensity_frame(scene, config, seed, state.frame)
    counters = frame.macropixel_counters()
    outputs = ArrayOutputs.zeros()
    outputs.gate = state.gate.copy()
    outputs.bins = counters
    outputs.overflow = (counters >= COUNTER_MAX).any(axis=-1)
    new = state.copy()
    new.frame = state.frame + 1
    z = np.zeros(SHAPE, np.int64)
    return new, FrameResult(outputs, z, z.copy(), np.ones(SHAPE, np.int64), np.full(SHAPE, np.nan))


@dataclass
class MultiplexedCapture:
    spad_index: int
    result: FrameResult
    depth_m: np.ndarray  # (32, 64)


def time_multiplexed_capture(scene: SceneFrame, config: SensorConfig, masks: list[np.ndarray],
                             seed: int = 0, gate: int | np.ndarray = 0,
                             table: PwlSegmentTable = DEFAULT_TABLE) -> list[MultiplexedCapture]:
    """One fixed-gate frame per enable mask (one SPAD per macropixel enabled each time)."""
    cfg = config.replace(mode="prescribed", subexposures_per_frame=1)
    captures = []
    for k, mask in enumerate(masks):
        per_pixel = to_macropixels(np.asarray(mask, bool))
        if not np.all(per_pixel.sum(axis=-1) == 1):
            raise ValueError(f"mask {k} must enable exactly one SPAD per macropixel")
        spad = int(np.argmax(per_pixel[0, 0]))
        state = ArrayState.initial(cfg, start_gate=gate, prescribed=gate)
        _, result = step_frame(state, scene.with_enable(mask), cfg, seed=seed + k, table=table)
        captures.append(MultiplexedCapture(spad, result, result.depth_m(cfg)))
    return captures


def compose_highres(captures: list[MultiplexedCapture]) -> np.ndarray:
    """Interleave 16 single-SPAD depth maps into a ``(128, 256)`` per-SPAD map."""
    out = np.full((ARRAY_ROWS * 4, ARRAY_COLS * 4), np.nan)
    for cap in captures:
        out[cap.spad_index // 4::4, cap.spad_index % 4::4] = cap.depth_m
    return out
