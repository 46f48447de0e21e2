"""Golden vectors for the in-pixel logic: (histogram, state in) -> (report, state out).

File format, one vector per line, ``#`` starts a comment::

    alpha n_gates | b1 .. b8 ovf | gate latched status refresh | flag id ovf hmax B | gate latched status refresh

``latched`` is -1 before the first exposure, ``status`` is 0/1/2 for
searching/locked/backtracked, and all flags are 0/1. Vectors use the
tracking gate mode and the default threshold table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SensorConfig
from .pixel import NO_B, Histogram, MacropixelState, PeakReport, Status, step_exposure


@dataclass(frozen=True)
class GoldenVector:
    alpha: int
    n_gates: int
    hist: Histogram
    state_in: MacropixelState
    report: PeakReport
    state_out: MacropixelState


class GoldenFormatError(ValueError):
    pass


def _state_fields(s: MacropixelState) -> list[int]:
    return [s.gate_position, NO_B if s.latched_b is None else s.latched_b, int(s.status), int(s.refresh_b)]


def _state(vals: list[int]) -> MacropixelState:
    gate, latched, status, refresh = vals
    return MacropixelState(gate, None if latched == NO_B else latched, Status(status), refresh_b=bool(refresh))


def format_vector(v: GoldenVector) -> str:
    r = v.report
    groups = [
        [v.alpha, v.n_gates],
        list(v.hist.bins) + [int(v.hist.overflow)],
        _state_fields(v.state_in),
        [int(r.peak_bin_flag), r.peak_bin_id, int(r.overflow), r.h_max, r.background_b],
        _state_fields(v.state_out),
    ]
    return " | ".join(" ".join(str(x) for x in g) for g in groups)


def parse_vector(line: str) -> GoldenVector:
    parts = [p.split() for p in line.split("|")]
    sizes = [2, 9, 4, 5, 4]
    if [len(p) for p in parts] != sizes:
        raise GoldenFormatError(f"bad golden line: {line!r}")
    try:
        cfg, hist, sin, rep, sout = ([int(x) for x in p] for p in parts)
    except ValueError as exc:
        raise GoldenFormatError(f"non-integer field in {line!r}") from exc
    return GoldenVector(
        alpha=cfg[0],
        n_gates=cfg[1],
        hist=Histogram(tuple(hist[:8]), bool(hist[8])),
        state_in=_state(sin),
        report=PeakReport(bool(rep[0]), rep[1], bool(rep[2]), rep[3], rep[4]),
        state_out=_state(sout),
    )


def read_vectors(path: str | Path) -> list[GoldenVector]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(parse_vector(line))
    return out


def write_vectors(vectors: list[GoldenVector], path: str | Path, comment: str = "") -> None:
    head = [f"# {ln}" for ln in comment.splitlines()]
    head.append("# alpha n_gates | b1..b8 ovf | gate latched status refresh | flag id ovf hmax B | gate latched status refresh")
    Path(path).write_text("\n".join(head + [format_vector(v) for v in vectors]) + "\n")


def evaluate(alpha: int, n_gates: int, hist: Histogram, state_in: MacropixelState) -> GoldenVector:
    cfg = SensorConfig(alpha=alpha, n_gate_positions=n_gates, mode="tracking")
    state_out, report = step_exposure(state_in, hist, cfg)
    return GoldenVector(alpha, n_gates, hist, state_in, report,
                        MacropixelState(state_out.gate_position, state_out.latched_b, state_out.status,
                                        refresh_b=state_out.refresh_b))


def check_vector(v: GoldenVector) -> bool:
    got = evaluate(v.alpha, v.n_gates, v.hist, v.state_in)
    return got.report == v.report and _state_fields(got.state_out) == _state_fields(v.state_out)


def random_vectors(n: int, seed: int = 0) -> list[GoldenVector]:
    """Random but reproducible vectors that exercise every branch of the pixel logic."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        alpha = int(rng.integers(1, 3))
        n_gates = 16
        level = int(rng.choice([0, 5, 50, 400, 3000]))
        bins = rng.poisson(level, 8)
        if rng.random() < 0.6:
            bins[rng.integers(0, 8)] += int(rng.integers(0, 6 * np.sqrt(level + 1) + 20))
        ovf = rng.random() < 0.05
        if ovf:
            bins[rng.integers(0, 8)] = 4095
        bins = np.minimum(bins, 4095)
        latched = int(rng.choice([NO_B, int(rng.integers(0, 4096)), int(max(bins.min(), 0))]))
        state = MacropixelState(int(rng.integers(0, n_gates)), None if latched == NO_B else latched,
                                Status(int(rng.integers(0, 3))), refresh_b=bool(rng.random() < 0.3))
        out.append(evaluate(alpha, n_gates, Histogram(tuple(int(b) for b in bins), bool(ovf)), state))
    return out
