"""Centre-of-mass peak position over the 8 histogram bins.

The background is the minimum bin. The fixed-point variant keeps three binary
fractional digits (1/8 bin), truncating toward zero like the column divider.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT
from .pixel import Histogram

FRAC_BITS = 3
SCALE = 1 << FRAC_BITS
_T = np.arange(1, 9, dtype=np.int64)


@dataclass(frozen=True)
class CmmResult:
    valid: bool
    # peak position in eighths of a bin (bins numbered 1..8); None when invalid
    eighths: int | None = None

    @property
    def peak_position(self) -> float | None:
        return None if self.eighths is None else self.eighths / SCALE

    @property
    def code(self) -> int:
        """6-bit readout code: ``(peak_position - 1)`` in 3.3 fixed point (0 when invalid)."""
        return 0 if self.eighths is None else self.eighths - SCALE

    def absolute_time(self, gate_position: int, gate_step_bins: int, bin_width_s: float) -> float | None:
        """``(gate_position * gate_step_bins + peak_position) * bin_width``.

        Bin ``t`` spans ``[t-1, t)`` bin widths after the gate start, so a
        return centred in bin ``t`` reads ``t``; the half-bin offset is left to
        the caller's zero-offset correction.
        """
        if self.eighths is None:
            return None
        return (gate_position * gate_step_bins + self.eighths / SCALE) * bin_width_s


def _moments(bins: np.ndarray):
    h = np.asarray(bins, dtype=np.int64)
    b = h.min(axis=-1, keepdims=True)
    excess = h - b
    return (excess * _T).sum(axis=-1), excess.sum(axis=-1)


def cmm_fixed_batch(bins: np.ndarray, strict_center: bool = False):
    """Returns ``(eighths, valid)``; ``eighths`` is 0 where invalid."""
    h = np.asarray(bins, dtype=np.int64)
    num, den = _moments(h)
    valid = den > 0
    eighths = np.where(valid, (num * SCALE) // np.where(valid, den, 1), 0)
    if strict_center:
        valid &= np.isin(np.argmax(h, axis=-1) + 1, (4, 5))
        eighths = np.where(valid, eighths, 0)
    return eighths, valid


def cmm_fixed(hist: Histogram, strict_center: bool = False) -> CmmResult:
    """Fixed-point centre of mass.

    ``strict_center`` additionally rejects histograms whose tallest bin is not
    one of the two middle bins, for comparisons against the silicon, which only
    computes correct values in that case.
    """
    eighths, valid = cmm_fixed_batch(hist.as_array(), strict_center)
    return CmmResult(bool(valid), int(eighths) if valid else None)


def cmm_reference_batch(bins: np.ndarray) -> np.ndarray:
    """Full-precision centre of mass; NaN for flat histograms."""
    num, den = _moments(bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)


def cmm_reference(hist: Histogram) -> float | None:
    num, den = _moments(hist.as_array())
    return None if den == 0 else float(num) / float(den)


def position_to_depth(peak_position, gate_position, config, zero_offset_bins: float = -0.5):
    """Distance in metres for a 1-based peak position inside a gate.

    The default offset maps the centre of bin ``t`` (which reads ``t``) back to
    its true arrival time; pass 0 to get the raw ``absolute_time`` convention.
    """
    t_bins = np.asarray(gate_position) * config.gate_step_bins + np.asarray(peak_position) + zero_offset_bins
    return SPEED_OF_LIGHT * t_bins * config.bin_width_s / 2.0
