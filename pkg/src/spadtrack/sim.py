"""Photon statistics for one macropixel exposure.

Two fidelity levels are provided:

* :func:`sample_histogram` - independent Poisson draw per bin from the expected
  intensity returned by :func:`expected_bin_counts` (fast path, used array-wide).
* :func:`event_level_exposure` - per laser cycle photon timestamps, merged by the
  pulse-shortener window of the OR tree, binned with a true overflow freeze.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import BINS_PER_GATE, COUNTER_MAX, SPADS_PER_PIXEL, SensorConfig, range_to_time
from .pixel import Histogram
from .scene import ScenePixel


def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *keys)``.

    Streams for different keys are independent, so results never depend on
    the order (or the process) in which streams are consumed.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class BinIntensity:
    """Expected counts per bin for one exposure."""

    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (BINS_PER_GATE,) or np.any(lam < 0):
            raise ValueError("intensity needs 8 non-negative entries")
        object.__setattr__(self, "lam", lam)


def bin_edges_s(config: SensorConfig, gates) -> np.ndarray:
    """Bin edges (seconds after laser firing), shape ``gates.shape + (9,)``."""
    gates = np.asarray(gates)
    widths = config.bin_width_s * np.asarray(config.bin_width_multipliers)
    rel = np.concatenate([[0.0], np.cumsum(widths)])
    start = gates[..., None] * (config.gate_step_bins * config.bin_width_s)
    return start + rel


def signal_per_spad(config: SensorConfig, depth_m, reflectivity) -> np.ndarray:
    """Expected signal photons per exposure for each SPAD (inverse-square, linear in reflectivity)."""
    depth = np.asarray(depth_m, dtype=float)
    refl = np.asarray(reflectivity, dtype=float)
    surface = np.isfinite(depth) & (depth > 0)
    safe = np.where(surface, depth, 1.0)
    s = (config.signal_ref_counts / SPADS_PER_PIXEL) * refl * (config.ref_distance_m / safe) ** 2
    return np.where(surface, s, 0.0)


def expected_bin_counts_batch(depth_m, reflectivity, ambient_rate, spad_enable,
                              config: SensorConfig, gates) -> np.ndarray:
    """Vectorised :func:`expected_bin_counts`; SPAD inputs have trailing axis 16."""
    enable = np.asarray(spad_enable, dtype=bool)
    depth = np.asarray(depth_m, dtype=float)
    s = signal_per_spad(config, depth, reflectivity) * enable
    amb = (np.asarray(ambient_rate, dtype=float) * enable).sum(axis=-1)

    edges = bin_edges_s(config, gates)  # (..., 9)
    widths = np.diff(edges, axis=-1)
    ambient = amb[..., None] * widths * config.cycles_per_exposure

    surface = np.isfinite(depth) & (depth > 0)
    tau = range_to_time(np.where(surface, depth, 0.0))
    sigma = config.pulse_sigma_s
    e = edges[..., None, :]  # (..., 1, 9)
    t = tau[..., :, None]  # (..., 16, 1)
    if sigma > 0:
        cdf = ndtr((e - t) / sigma)
    else:
        cdf = (e > t).astype(float)
    frac = np.diff(cdf, axis=-1)  # (..., 16, 8)
    signal = np.einsum("...s,...sk->...k", s, frac)
    return ambient + signal


def expected_bin_counts(scene_pixel: ScenePixel, config: SensorConfig, gate_position: int) -> BinIntensity:
    if not 0 <= gate_position < config.n_gate_positions:
        raise ValueError(f"gate_position {gate_position} out of range")
    lam = expected_bin_counts_batch(scene_pixel.depth_m, scene_pixel.reflectivity,
                                    scene_pixel.ambient_rate, scene_pixel.spad_enable,
                                    config, gate_position)
    return BinIntensity(np.maximum(lam, 0.0))


def sample_counts(lam: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Poisson draw per bin, clamped to the counter range; returns ``(bins, overflow)``.

    The overflow flag is raised when any raw draw reaches the counter maximum.
    This clamps bins independently instead of freezing the whole histogram; the
    event-level model is authoritative for saturation behaviour.
    """
    raw = rng.poisson(np.asarray(lam, dtype=float))
    overflow = (raw >= COUNTER_MAX).any(axis=-1)
    return np.minimum(raw, COUNTER_MAX).astype(np.int64), overflow


def sample_histogram(intensity: BinIntensity, rng: np.random.Generator) -> Histogram:
    bins, overflow = sample_counts(intensity.lam, rng)
    return Histogram(tuple(int(b) for b in bins), bool(overflow))


# --- event-level model ------------------------------------------------------


def merge_events(cycle: np.ndarray, t: np.ndarray, window_s: float) -> np.ndarray:
    """Accept mask for events sorted by ``(cycle, t)``.

    An event is discarded when it arrives less than ``window_s`` after the
    previously *accepted* event of the same laser cycle.
    """
    n = len(t)
    accept = np.ones(n, dtype=bool)
    if n < 2 or window_s <= 0:
        return accept
    close = np.zeros(n, dtype=bool)
    close[1:] = (cycle[1:] == cycle[:-1]) & (np.diff(t) < window_s)
    last = 0.0
    for i in np.flatnonzero(close):
        if not close[i - 1]:
            last = t[i - 1]
        if t[i] - last < window_s:
            accept[i] = False
        else:
            last = t[i]
    return accept


@dataclass
class EventStats:
    raw_events: int
    accepted_events: int
    in_gate_events: int
    frozen: bool


def event_level_exposure(scene_pixel: ScenePixel, config: SensorConfig, gate_position: int,
                         rng: np.random.Generator, return_stats: bool = False):
    """Simulate one exposure photon by photon.

    Ambient photons are homogeneous over the laser period; signal photons are
    Gaussian around the round-trip delay of the SPAD that detected them. All 16
    SPADs share the merged OR-tree stream.
    """
    if not 0 <= gate_position < config.n_gate_positions:
        raise ValueError(f"gate_position {gate_position} out of range")
    cycles = config.cycles_per_exposure
    period = config.laser_period_s
    enable = np.asarray(scene_pixel.spad_enable, bool)

    amb_rate = float((np.asarray(scene_pixel.ambient_rate) * enable).sum())
    n_amb = rng.poisson(amb_rate * period * cycles)
    amb_cycle = rng.integers(0, cycles, n_amb)
    amb_t = rng.uniform(0.0, period, n_amb)

    s = signal_per_spad(config, scene_pixel.depth_m, scene_pixel.reflectivity) * enable
    s_total = float(s.sum())
    n_sig = rng.poisson(s_total)
    if n_sig:
        spad = rng.choice(16, size=n_sig, p=s / s_total)
        tau = range_to_time(np.asarray(scene_pixel.depth_m, float)[spad])
        sig_t = tau + config.pulse_sigma_s * rng.standard_normal(n_sig)
    else:
        sig_t = np.empty(0)
    sig_cycle = rng.integers(0, cycles, n_sig)

    cyc = np.concatenate([amb_cycle, sig_cycle])
    t = np.concatenate([amb_t, sig_t])
    order = np.lexsort((t, cyc))
    cyc, t = cyc[order], t[order]
    accepted = merge_events(cyc, t, config.pulse_merge_window_s)
    t_acc = t[accepted]

    edges = bin_edges_s(config, gate_position)
    in_gate = (t_acc >= edges[0]) & (t_acc < edges[-1])
    idx = np.searchsorted(edges, t_acc[in_gate], side="right") - 1

    # freeze: stop every counter once any counter reaches full scale
    if len(idx) >= COUNTER_MAX:
        stop = len(idx)
        for k in range(BINS_PER_GATE):
            pos = np.flatnonzero(idx == k)
            if len(pos) >= COUNTER_MAX:
                stop = min(stop, pos[COUNTER_MAX - 1] + 1)
        idx = idx[:stop]
    counts = np.bincount(idx, minlength=BINS_PER_GATE)
    frozen = bool(counts.max() >= COUNTER_MAX)
    hist = Histogram(tuple(int(c) for c in counts), frozen)
    if return_stats:
        return hist, EventStats(len(t), int(accepted.sum()), int(in_gate.sum()), frozen)
    return hist
