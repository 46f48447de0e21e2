"""Independent pure-Python reference implementations used only by the tests.

These are written from the behavioural description, not from the package
code, and use plain ints / Fractions so they share no vectorised code path.
"""

from __future__ import annotations

import math
from fractions import Fraction

C = 299_792_458.0


def tree(bins):
    """Knockout over 8 bins, ties to the lower index. Returns (peak_id, h_max, B)."""
    cand = [(bins[i], i + 1) for i in range(8)]
    loser = None
    while len(cand) > 1:
        nxt = []
        for (va, ia), (vb, ib) in zip(cand[::2], cand[1::2]):
            if va >= vb:
                nxt.append((va, ia))
                loser = vb
            else:
                nxt.append((vb, ib))
                loser = va
        cand = nxt
    return cand[0][1], cand[0][0], loser


# hand-copied segment table: (first B, right shift, offset)
SEGMENTS = [(0, 1, 0), (18, 3, 6), (99, 4, 12), (391, 5, 24), (1444, 6, 47)]


def sqrt_approx(b):
    seg = [s for s in SEGMENTS if s[0] <= b][-1]
    return max((b >> seg[1]) + seg[2], 0)


def threshold(b, alpha):
    return min(b + alpha * sqrt_approx(b), 4095)


def step(alpha, n_gates, bins, gate, latched, status, refresh):
    """One tracking-mode exposure. latched=None before the first exposure.

    Returns (flag, peak_id, h_max, B_used, gate', latched', status', refresh').
    """
    peak_id, h_max, b_tree = tree(bins)
    first = latched is None
    b = b_tree if (first or refresh) else latched
    flag = (not first) and h_max > threshold(b, alpha)
    if flag:
        delta = -1 if peak_id <= 2 else (1 if peak_id >= 7 else 0)
        new_status = 1
    elif status == 1:
        delta, new_status = -1, 2
    else:
        delta, new_status = 1, 0
    new_gate = (gate + delta) % n_gates
    return flag, peak_id, h_max, b, new_gate, b, new_status, new_gate != gate


def cmm_eighths(bins):
    """floor(8 * CoM) with exact rationals, or None for a flat histogram."""
    b = min(bins)
    den = sum(h - b for h in bins)
    if den == 0:
        return None
    pos = Fraction(sum((t + 1) * (h - b) for t, h in enumerate(bins)), den)
    return math.floor(pos * 8)


def gate_span_m(bin_width_s, bins=8):
    return C * bins * bin_width_s / 2


def frame_rate(bits_per_pixel, pixels=2048, line_rate=100e6, lines=64):
    return math.floor(lines * line_rate / (pixels * bits_per_pixel))
