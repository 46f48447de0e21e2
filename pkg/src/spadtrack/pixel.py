"""Bit-exact model of the macropixel's digital processing.

Everything on this path is integer arithmetic. The ``*_batch`` functions work
on numpy integer arrays with a trailing axis of 8 bins (or element-wise on
state arrays) and are what the array simulator uses; the scalar functions wrap
them for single-pixel use, so both routes are bit-identical by construction.

Bins are numbered 1..8 in every public value (``peak_bin_id``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .config import BINS_PER_GATE, COUNTER_MAX, SensorConfig
from .pwl import DEFAULT_TABLE, PwlSegmentTable

NO_B = -1  # latched background not yet initialised


class Status(IntEnum):
    SEARCHING = 0
    LOCKED = 1
    BACKTRACKED = 2


class GateMode(IntEnum):
    TRACKING = 0
    CONTINUOUS_SLIDE = 1
    PRESCRIBED = 2


GATE_MODES = {"tracking": GateMode.TRACKING, "continuous_slide": GateMode.CONTINUOUS_SLIDE,
              "prescribed": GateMode.PRESCRIBED}


@dataclass(frozen=True)
class Histogram:
    bins: tuple[int, ...]
    overflow: bool = False

    def __post_init__(self):
        bins = tuple(int(b) for b in self.bins)
        if len(bins) != BINS_PER_GATE:
            raise ValueError("a histogram has exactly 8 bins")
        if min(bins) < 0 or max(bins) > COUNTER_MAX:
            raise ValueError("bin counts must lie in [0, 4095]")
        if self.overflow and max(bins) != COUNTER_MAX:
            raise ValueError("overflow requires a full-scale bin")
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "overflow", bool(self.overflow))

    def __getitem__(self, t: int) -> int:
        """1-based bin access."""
        if not 1 <= t <= BINS_PER_GATE:
            raise IndexError(t)
        return self.bins[t - 1]

    def as_array(self) -> np.ndarray:
        return np.array(self.bins, dtype=np.int64)


@dataclass(frozen=True)
class PeakReport:
    peak_bin_flag: bool
    peak_bin_id: int
    overflow: bool
    h_max: int
    background_b: int


@dataclass(frozen=True)
class MacropixelState:
    gate_position: int = 0
    latched_b: int | None = None
    status: Status = Status.SEARCHING
    last_report: PeakReport | None = None
    # set when the gate moved on the previous exposure; the next exposure refreshes B
    refresh_b: bool = True

    def __post_init__(self):
        if self.gate_position < 0:
            raise ValueError("gate position must be non-negative")
        if self.latched_b is not None and not 0 <= self.latched_b <= COUNTER_MAX:
            raise ValueError("latched B must lie in [0, 4095]")
        object.__setattr__(self, "status", Status(self.status))


# --- comparator tree --------------------------------------------------------


def _compare(a_val, a_id, b_val, b_id):
    """One comparator: higher input wins, ties go to the lower bin (left input)."""
    left = a_val >= b_val
    return (np.where(left, a_val, b_val), np.where(left, a_id, b_id), np.where(left, b_val, a_val))


def comparator_tree_batch(bins: np.ndarray):
    """Seven-comparator knockout over bins 1..8.

    Returns ``(peak_bin_id, h_max, background_b)``; ``background_b`` is the losing
    input of the final comparator, i.e. the maximum of the half without the peak.
    """
    h = np.asarray(bins, dtype=np.int64)
    ids = [np.full(h.shape[:-1], t, dtype=np.int64) for t in range(1, 9)]
    vals = [h[..., t] for t in range(8)]
    # COMP1..COMP4
    l1 = [_compare(vals[2 * i], ids[2 * i], vals[2 * i + 1], ids[2 * i + 1]) for i in range(4)]
    # COMP5, COMP6
    l2 = [_compare(l1[2 * i][0], l1[2 * i][1], l1[2 * i + 1][0], l1[2 * i + 1][1]) for i in range(2)]
    # COMP7
    h_max, peak_id, b = _compare(l2[0][0], l2[0][1], l2[1][0], l2[1][1])
    return peak_id, h_max, b


def comparator_tree(hist: Histogram) -> tuple[int, int, int]:
    peak_id, h_max, b = comparator_tree_batch(hist.as_array())
    return int(peak_id), int(h_max), int(b)


# --- threshold --------------------------------------------------------------


def threshold_batch(background_b, alpha: int, table: PwlSegmentTable = DEFAULT_TABLE):
    b = np.asarray(background_b, dtype=np.int64)
    if alpha not in (1, 2):
        raise ValueError("alpha must be 1 or 2")
    radical = np.asarray(table.evaluate(b), dtype=np.int64)
    return np.minimum(b + (radical << (alpha - 1)), COUNTER_MAX)


def threshold(background_b: int, alpha: int, table: PwlSegmentTable = DEFAULT_TABLE) -> int:
    """``B + alpha * approx(1.75 sqrt(B))`` with shifts and adds, saturating at 4095."""
    if not 0 <= background_b <= COUNTER_MAX:
        raise ValueError("background must lie in [0, 4095]")
    return int(threshold_batch(background_b, alpha, table))


# --- gate update ------------------------------------------------------------


def update_gate_batch(gate, status, flag, peak_id, n_gates: int):
    """Tracking rule; returns ``(new_gate, new_status)``.

    A detected peak in bins 1-2 steps the gate back, 7-8 steps it forward,
    3-6 holds it. Any detection marks the pixel locked. A lost peak gets one
    step back (backtracked), after which forward scanning resumes.
    """
    gate = np.asarray(gate, dtype=np.int64)
    status = np.asarray(status, dtype=np.int64)
    flag = np.asarray(flag, dtype=bool)
    peak_id = np.asarray(peak_id, dtype=np.int64)
    step = np.where(
        flag,
        np.where(peak_id <= 2, -1, np.where(peak_id >= 7, 1, 0)),
        np.where(status == Status.LOCKED, -1, 1),
    )
    new_status = np.where(
        flag,
        Status.LOCKED,
        np.where(status == Status.LOCKED, Status.BACKTRACKED, Status.SEARCHING),
    )
    return (gate + step) % n_gates, new_status.astype(np.int64)


def update_gate(state: MacropixelState, report: PeakReport, n_gate_positions: int) -> MacropixelState:
    gate, status = update_gate_batch(state.gate_position, int(state.status), report.peak_bin_flag,
                                     report.peak_bin_id, n_gate_positions)
    gate = int(gate)
    return replace(state, gate_position=gate, status=Status(int(status)), last_report=report,
                   refresh_b=gate != state.gate_position)


# --- detection and the full exposure step -----------------------------------


def detect_peak(hist: Histogram, state: MacropixelState, alpha: int,
                table: PwlSegmentTable = DEFAULT_TABLE) -> PeakReport:
    """Compare the tallest bin against the threshold built from the effective B.

    The effective B is this exposure's tree output when the state has no
    latched value or the gate just moved, otherwise the latched value.
    """
    peak_id, h_max, tree_b = comparator_tree(hist)
    b = tree_b if state.latched_b is None or state.refresh_b else state.latched_b
    flag = h_max > threshold(b, alpha, table)
    return PeakReport(bool(flag), peak_id, hist.overflow, h_max, b)


@dataclass
class StepResult:
    """Batched result of one exposure step (all arrays share the pixel shape)."""

    gate: np.ndarray
    latched_b: np.ndarray
    status: np.ndarray
    refresh_b: np.ndarray
    flag: np.ndarray
    peak_id: np.ndarray
    h_max: np.ndarray
    background_b: np.ndarray
    overflow: np.ndarray


def step_exposure_batch(gate, latched_b, status, refresh_b, bins, overflow, alpha: int,
                        n_gates: int, table: PwlSegmentTable = DEFAULT_TABLE,
                        mode: GateMode = GateMode.TRACKING, prescribed=None) -> StepResult:
    """One exposure for many pixels: B latching, detection and gate update.

    ``latched_b`` uses ``NO_B`` (-1) for "never latched". In tracking mode the
    first exposure only initialises B (no detection) and the gate then scans
    on. In continuous-slide and prescribed modes B is refreshed every exposure
    and detection is always active.
    """
    gate = np.asarray(gate, dtype=np.int64)
    latched_b = np.asarray(latched_b, dtype=np.int64)
    status = np.asarray(status, dtype=np.int64)
    refresh_b = np.asarray(refresh_b, dtype=bool)
    overflow = np.asarray(overflow, dtype=bool)

    peak_id, h_max, tree_b = comparator_tree_batch(bins)
    first = latched_b == NO_B
    if mode == GateMode.TRACKING:
        use_tree = first | refresh_b
    else:
        use_tree = np.ones_like(first)
    b = np.where(use_tree, tree_b, latched_b)
    flag = h_max > threshold_batch(b, alpha, table)
    if mode == GateMode.TRACKING:
        flag = flag & ~first

    if mode == GateMode.TRACKING:
        new_gate, new_status = update_gate_batch(gate, status, flag, peak_id, n_gates)
    elif mode == GateMode.CONTINUOUS_SLIDE:
        new_gate = (gate + 1) % n_gates
        new_status = np.full_like(status, Status.SEARCHING)
    else:
        new_gate = np.broadcast_to(np.asarray(prescribed if prescribed is not None else gate,
                                              dtype=np.int64), gate.shape).copy()
        new_status = np.where(flag, Status.LOCKED, Status.SEARCHING).astype(np.int64)

    return StepResult(
        gate=new_gate,
        latched_b=b,
        status=new_status,
        refresh_b=new_gate != gate,
        flag=flag,
        peak_id=peak_id,
        h_max=h_max,
        background_b=b,
        overflow=overflow,
    )


def step_exposure(state: MacropixelState, hist: Histogram, config: SensorConfig,
                  table: PwlSegmentTable = DEFAULT_TABLE,
                  prescribed_gate: int | None = None) -> tuple[MacropixelState, PeakReport]:
    """Process one exposure captured at ``state.gate_position``."""
    r = step_exposure_batch(
        state.gate_position,
        NO_B if state.latched_b is None else state.latched_b,
        int(state.status),
        state.refresh_b,
        hist.as_array(),
        hist.overflow,
        config.alpha,
        config.n_gate_positions,
        table,
        GATE_MODES[config.mode],
        prescribed_gate,
    )
    report = PeakReport(bool(r.flag), int(r.peak_id), bool(r.overflow), int(r.h_max), int(r.background_b))
    new_state = MacropixelState(
        gate_position=int(r.gate),
        latched_b=int(r.latched_b),
        status=Status(int(r.status)),
        last_report=report,
        refresh_b=bool(r.refresh_b),
    )
    return new_state, report


def is_centered(report: PeakReport) -> bool:
    """Peak detected in one of the middle bins 3..6 (gate held)."""
    return report.peak_bin_flag and 3 <= report.peak_bin_id <= 6
