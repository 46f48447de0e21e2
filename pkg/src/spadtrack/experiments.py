"""Desk-scale experiments: false-positive rate, range sweep, tracking, dynamic vision, data volume.

Every experiment is deterministic for a given seed. Writers emit CSV files
whose leading ``#`` lines echo the full resolved configuration.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .array import ArrayState, FrameResult, compose_highres, intensity_frame, step_frame, time_multiplexed_capture
from .cmm import cmm_reference, position_to_depth
from .config import SensorConfig, dump_config, gate_for_distance, range_to_time
from .pixel import MacropixelState, Status, is_centered, step_exposure
from .pwl import DEFAULT_TABLE, PwlSegmentTable
from .readout import (EncodedFrame, FrameMode, OutputFormat, SmartFilter, data_volume_report, encode_frame,
                      nonzero_mask)
from .scene import SceneFrame, ScenePixel, ambient_only, depth_to_mm, save_csv_map, save_pgm16, single_spad_masks
from .sim import expected_bin_counts, sample_histogram, stream_rng

log = logging.getLogger(__name__)

SBR_DEFINITION = "SBR = expected signal counts inside the gate / expected background counts per bin"


class LinkBudgetError(ValueError):
    pass


# --- output helpers ---------------------------------------------------------


def write_csv(path: str | Path, rows: list[dict], config: SensorConfig, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in dump_config(config).splitlines():
            fh.write(f"# {line}\n")
        for key, value in meta.items():
            fh.write(f"# {key} = {value}\n")
        if rows:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# --- false positive rate ----------------------------------------------------


def gaussian_tail(alpha: int) -> float:
    return float(stats.norm.sf(1.75 * alpha))


def poisson_tail(level: float, alpha: int) -> float:
    """P(h > B + 1.75 alpha sqrt(B)) for h ~ Poisson(B) with B known exactly."""
    return float(stats.poisson.sf(math.floor(level + 1.75 * alpha * math.sqrt(level)), level))


def ideal_tail_mc(level: float, alpha: int, trials: int, rng: np.random.Generator) -> float:
    """Monte-Carlo single-bin tail against the exact known-B threshold."""
    h = rng.poisson(level, trials)
    return float(np.mean(h > level + 1.75 * alpha * math.sqrt(level)))


def in_pixel_fpr(config: SensorConfig, level: float, frames: int, seed: int,
                 table: PwlSegmentTable = DEFAULT_TABLE) -> float:
    """Mean rate of peak flags across the array under ambient light only.

    The first frame only initialises the background estimate and is excluded.
    """
    scene = ambient_only(config.ambient_rate_for_level(level))
    state = ArrayState.initial(config)
    flags = 0
    n = 0
    for f in range(frames):
        state, res = step_frame(state, scene, config, seed=seed, table=table)
        if f == 0:
            continue
        flags += int(res.outputs.peak_flag.sum())
        n += res.outputs.peak_flag.size
    return flags / n


def run_fpr(config: SensorConfig, levels=(20, 50, 100, 200, 500, 1000, 2000), alphas=(1, 2),
            frames: int = 500, seed: int = 0, ideal_trials: int = 1_000_000,
            outdir: str | Path | None = None) -> list[dict]:
    rows = []
    for i, level in enumerate(levels):
        for alpha in alphas:
            cfg = config.replace(alpha=alpha, mode="tracking", subexposures_per_frame=1)
            fpr = in_pixel_fpr(cfg, level, frames, seed=seed + 1000 * i + alpha)
            mc = ideal_tail_mc(level, alpha, ideal_trials, stream_rng(seed, 7, i, alpha))
            rows.append({
                "level": level,
                "alpha": alpha,
                "fpr_in_pixel": fpr,
                "fpr_ideal_mc": mc,
                "tail_poisson_exact": poisson_tail(level, alpha),
                "tail_gaussian": gaussian_tail(alpha),
            })
            log.info("fpr level=%s alpha=%s in-pixel=%.5f ideal=%.5f", level, alpha, fpr, mc)
    if outdir is not None:
        write_csv(Path(outdir) / "fpr.csv", rows, config, seed=seed, frames=frames)
    return rows


# --- link budget and range sweep --------------------------------------------


def expected_sbr(config: SensorConfig, distance_m: float, reflectivity: float, ambient_per_bin: float) -> float:
    """Expected SBR of a uniform macropixel at the gate that best centres the return."""
    rate = config.ambient_rate_for_level(ambient_per_bin)
    gate = gate_for_distance(config, distance_m)
    lam = expected_bin_counts(ScenePixel.uniform(distance_m, reflectivity, rate), config, gate).lam
    bg = expected_bin_counts(ScenePixel.uniform(distance_m, 0.0, rate), config, gate).lam
    return float((lam - bg).sum() / bg.mean())


def calibrate_link_budget(config: SensorConfig, distance_m: float, reflectivity: float,
                          target_sbr: float, ambient_per_bin: float) -> float:
    """``signal_ref_counts`` giving ``target_sbr`` for a target at ``distance_m``.

    Expected signal is linear in ``signal_ref_counts``, so one evaluation at
    unit signal fixes the solution (including the part of the pulse that
    falls outside the gate).
    """
    if distance_m <= 0 or reflectivity <= 0 or target_sbr <= 0 or ambient_per_bin <= 0:
        raise LinkBudgetError("anchor needs positive distance, reflectivity, SBR and ambient")
    if range_to_time(distance_m) / config.bin_width_s >= config.total_span_bins:
        raise LinkBudgetError(f"{distance_m} m lies beyond the gated range")
    unit = expected_sbr(config.replace(signal_ref_counts=1.0), distance_m, reflectivity, ambient_per_bin)
    if unit <= 0:
        raise LinkBudgetError(f"no signal reaches a gate from {distance_m} m")
    return target_sbr / unit


@dataclass
class SweepPoint:
    distance_m: float
    reflectivity: float
    signal_counts: float
    sbr: float
    detection_rate: float
    mean_error_m: float
    std_m: float
    n_valid: int
    converged_after: int


def measure_point(config: SensorConfig, distance_m: float, reflectivity: float, ambient_per_bin: float,
                  frames: int, rng: np.random.Generator, table: PwlSegmentTable = DEFAULT_TABLE,
                  zero_offset_bins: float = -0.5, max_warmup: int | None = None) -> SweepPoint:
    """Track a uniform target with one macropixel and collect per-exposure depths.

    The pixel first runs until it holds the peak in a middle bin (at most
    ``max_warmup`` exposures); the next ``frames`` exposures are measured.
    Depth per exposure comes from the full-precision centre of mass of the
    exposures that detected the peak in bins 3..6 at the gate held most often;
    false locks elsewhere only lower ``detection_rate``.
    """
    cfg = config.replace(mode="tracking")
    pix = ScenePixel.uniform(distance_m, reflectivity, cfg.ambient_rate_for_level(ambient_per_bin))
    lam = {}

    def capture(g):
        if g not in lam:
            lam[g] = expected_bin_counts(pix, cfg, g)
        return sample_histogram(lam[g], rng)

    state = MacropixelState(gate_position=0)
    max_warmup = max_warmup or 3 * cfg.n_gate_positions
    converged = -1
    for i in range(max_warmup):
        state, rep = step_exposure(state, capture(state.gate_position), cfg, table)
        if is_centered(rep):
            converged = i + 1
            break

    depths, gates = [], []
    detections = 0
    for _ in range(frames):
        g = state.gate_position
        hist = capture(g)
        state, rep = step_exposure(state, hist, cfg, table)
        if rep.peak_bin_flag:
            detections += 1
        # only exposures that hold the gate carry the whole pulse; edge-bin peaks are truncated
        if is_centered(rep):
            pos = cmm_reference(hist)
            if pos is not None:
                depths.append(float(position_to_depth(pos, g, cfg, zero_offset_bins)))
                gates.append(g)
    # precision of the tracked target: keep the gate the pixel held most often
    if gates:
        held = np.bincount(gates).argmax()
        depths = np.array(depths)[np.array(gates) == held]
    else:
        depths = np.array(depths)
    signal = cfg.signal_ref_counts * reflectivity * (cfg.ref_distance_m / distance_m) ** 2
    return SweepPoint(
        distance_m=distance_m,
        reflectivity=reflectivity,
        signal_counts=signal,
        sbr=expected_sbr(cfg, distance_m, reflectivity, ambient_per_bin) if ambient_per_bin > 0 else math.inf,
        detection_rate=detections / frames,
        mean_error_m=float(depths.mean() - distance_m) if len(depths) else math.nan,
        std_m=float(depths.std(ddof=1)) if len(depths) > 1 else math.nan,
        n_valid=len(depths),
        converged_after=converged,
    )


def run_range_sweep(config: SensorConfig, distances, reflectivities, frames: int = 168,
                    ambient_per_bin: float = 50.0, seed: int = 0,
                    outdir: str | Path | None = None) -> list[SweepPoint]:
    points = []
    for i, eta in enumerate(reflectivities):
        for j, d in enumerate(distances):
            points.append(measure_point(config, float(d), float(eta), ambient_per_bin, frames,
                                        stream_rng(seed, i, j)))
    if outdir is not None:
        write_csv(Path(outdir) / "range_sweep.csv", [vars(p) for p in points], config, seed=seed,
                  frames=frames, ambient_per_bin=ambient_per_bin, sbr_definition=SBR_DEFINITION)
    return points


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# --- tracking sequence ------------------------------------------------------


@dataclass
class SequenceRun:
    results: list[FrameResult]
    gates: list[np.ndarray]
    statuses: list[np.ndarray]
    converged_frame: np.ndarray  # first frame (1-based) with a centred peak, -1 if never


def run_sequence(config: SensorConfig, scenes: list[SceneFrame], seed: int = 0,
                 state: ArrayState | None = None, table: PwlSegmentTable = DEFAULT_TABLE) -> SequenceRun:
    state = state or ArrayState.initial(config)
    results, gates, statuses = [], [], []
    converged = np.full(state.gate.shape, -1, np.int64)
    for i, scene in enumerate(scenes):
        state, res = step_frame(state, scene, config, seed=seed, table=table)
        out = res.outputs
        centred = out.peak_flag & (out.peak_id >= 3) & (out.peak_id <= 6)
        converged = np.where((converged < 0) & centred, i + 1, converged)
        results.append(res)
        gates.append(state.gate.copy())
        statuses.append(state.status.copy())
    return SequenceRun(results, gates, statuses, converged)


def run_tracking_sequence(config: SensorConfig, scenes: list[SceneFrame], seed: int = 0,
                          outdir: str | Path | None = None,
                          selected=((16, 16), (16, 32))) -> SequenceRun:
    """Per-frame gate maps, depth maps and selected-pixel histograms."""
    run = run_sequence(config, scenes, seed)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        hist_rows, summary = [], []
        for i, res in enumerate(run.results):
            depth = res.depth_m(config)
            depth = np.where(res.outputs.peak_flag, depth, np.nan)
            save_csv_map(outdir / f"gate_{i:04d}.csv", res.outputs.gate, fmt="%d")
            save_csv_map(outdir / f"depth_{i:04d}.csv", np.nan_to_num(depth, nan=0.0))
            save_pgm16(outdir / f"depth_{i:04d}.pgm", depth_to_mm(depth))
            for r, c in selected:
                row = {"frame": i, "row": r, "col": c, "gate": int(res.outputs.gate[r, c]),
                       "flag": int(res.outputs.peak_flag[r, c]), "peak_id": int(res.outputs.peak_id[r, c])}
                row.update({f"bin{t + 1}": int(res.outputs.bins[r, c, t]) for t in range(8)})
                hist_rows.append(row)
            summary.append({"frame": i, "locked": int((run.statuses[i] == Status.LOCKED).sum()),
                            "flagged": int(res.outputs.peak_flag.sum()),
                            "converged": int(((run.converged_frame > 0) & (run.converged_frame <= i + 1)).sum())})
        write_csv(outdir / "histograms.csv", hist_rows, config, seed=seed)
        write_csv(outdir / "summary.csv", summary, config, seed=seed)
    return run


def revisit_rates(config: SensorConfig, scene: SceneFrame, frames: int, seed: int = 0,
                  settle: int | None = None) -> dict[str, float]:
    """How often each pixel captures at its target gate: tracking vs continuous sliding.

    The target gate of a pixel is the one tracking settles on. Rates are
    averaged over pixels and over the frames after ``settle``.
    """
    settle = settle if settle is not None else 2 * config.n_gate_positions
    track = run_sequence(config.replace(mode="tracking"), [scene] * (settle + frames), seed)
    target = track.results[-1].outputs.gate
    t_hits = np.mean([(r.outputs.gate == target).mean() for r in track.results[settle:]])
    slide = run_sequence(config.replace(mode="continuous_slide"), [scene] * frames, seed)
    s_hits = np.mean([(r.outputs.gate == target).mean() for r in slide.results])
    return {"tracking": float(t_hits), "sliding": float(s_hits),
            "ratio": float(t_hits / s_hits) if s_hits else math.inf}


# --- dynamic vision and data volume -----------------------------------------


@dataclass
class DynamicVisionRun:
    frames: list[EncodedFrame]
    full_frames: list[EncodedFrame]
    nonzero: list[np.ndarray]
    moved: list[np.ndarray]
    volume: dict = field(default_factory=dict)


def run_dynamic_vision(config: SensorConfig, scenes: list[SceneFrame], seed: int = 0,
                       fmt: OutputFormat | str = OutputFormat.BIN_DEPTH, warmup: int = 0,
                       outdir: str | Path | None = None,
                       smart: SmartFilter | str = SmartFilter.MOTION_ONLY) -> DynamicVisionRun:
    """Filtered (by default motion-only) readout of a scene sequence.

    The first ``warmup`` scenes are stepped but not read out (acquisition).
    """
    state = ArrayState.initial(config)
    motion = FrameMode(fmt, smart)
    full = FrameMode(fmt)
    run = DynamicVisionRun([], [], [], [])
    for i, scene in enumerate(scenes):
        state, res = step_frame(state, scene, config, seed=seed)
        if i < warmup:
            continue
        enc = encode_frame(res.outputs, motion)
        run.frames.append(enc)
        run.full_frames.append(encode_frame(res.outputs, full))
        run.nonzero.append(nonzero_mask(enc))
        run.moved.append(res.outputs.gate_changed.copy())
    run.volume = data_volume_report(run.frames + run.full_frames)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, (enc, nz) in enumerate(zip(run.frames, run.nonzero)):
            (outdir / f"motion_{i:04d}.bin").write_bytes(enc.to_bytes())
            save_csv_map(outdir / f"nonzero_{i:04d}.csv", nz.astype(int), fmt="%d")
        write_csv(outdir / "volume.csv", _volume_rows(run.volume), config, seed=seed)
    return run


def _volume_rows(volume: dict) -> list[dict]:
    return [{"mode": k, "frames": v.frames, "total_bits": v.total_bits,
             "nonzero_fraction": v.nonzero_fraction,
             "compression_vs_histogram": v.compression_vs_histogram} for k, v in volume.items()]


ALL_MODES = [
    FrameMode(OutputFormat.HISTOGRAM),
    FrameMode(OutputFormat.BIN_DEPTH),
    FrameMode(OutputFormat.SUBBIN_DEPTH),
    FrameMode(OutputFormat.HISTOGRAM, SmartFilter.PEAK_ONLY),
    FrameMode(OutputFormat.BIN_DEPTH, SmartFilter.PEAK_ONLY),
    FrameMode(OutputFormat.SUBBIN_DEPTH, SmartFilter.PEAK_ONLY),
    FrameMode(OutputFormat.HISTOGRAM, SmartFilter.MOTION_ONLY),
    FrameMode(OutputFormat.BIN_DEPTH, SmartFilter.MOTION_ONLY),
    FrameMode(OutputFormat.SUBBIN_DEPTH, SmartFilter.MOTION_ONLY),
    FrameMode(OutputFormat.HISTOGRAM, row_skip=True),
    FrameMode(OutputFormat.BIN_DEPTH, SmartFilter.PEAK_ONLY, row_skip=True),
]


def run_compression_report(config: SensorConfig, scenes: list[SceneFrame], seed: int = 0,
                           modes=ALL_MODES, outdir: str | Path | None = None) -> list[dict]:
    run = run_sequence(config, scenes, seed)
    encoded = [encode_frame(res.outputs, m) for res in run.results for m in modes]
    rows = _volume_rows(data_volume_report(encoded))
    if outdir is not None:
        write_csv(Path(outdir) / "compression.csv", rows, config, seed=seed, frames=len(scenes))
    return rows


# --- intensity and high-resolution demos ------------------------------------


def run_intensity_demo(config: SensorConfig, scene: SceneFrame, seed: int = 0,
                       outdir: str | Path | None = None):
    frame = intensity_frame(scene, config, seed)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_pgm16(outdir / "intensity.pgm", frame.counts)
        save_csv_map(outdir / "intensity.csv", frame.counts, fmt="%d")
    return frame


def run_highres_demo(config: SensorConfig, scene: SceneFrame, seed: int = 0, gate: int = 0,
                     outdir: str | Path | None = None) -> np.ndarray:
    captures = time_multiplexed_capture(scene, config, single_spad_masks(), seed=seed, gate=gate)
    highres = compose_highres(captures)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_csv_map(outdir / "highres_depth.csv", np.nan_to_num(highres, nan=0.0))
        save_pgm16(outdir / "highres_depth.pgm", depth_to_mm(highres))
    return highres
