"""Shift-and-add piecewise-linear approximation of ``1.75 * sqrt(B)``.

Each segment computes ``(B >> n) + c`` for ``B`` in ``[start, next_start)``.
Breakpoints and constants are fitted offline by :func:`build_pwl_table`;
:data:`DEFAULT_TABLE` holds the result of ``build_pwl_table(3.0)``, the table
that is "hardwired" into the pixel model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import COUNTER_MAX

SQRT_GAIN = 1.75
DOMAIN = np.arange(COUNTER_MAX + 1, dtype=np.int64)


class PwlFitError(ValueError):
    pass


@dataclass(frozen=True)
class PwlSegmentTable:
    starts: tuple[int, ...]
    shifts: tuple[int, ...]
    offsets: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.starts) == len(self.shifts) == len(self.offsets) >= 1):
            raise ValueError("segment arrays must have equal non-zero length")
        if self.starts[0] != 0 or any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("segment starts must begin at 0 and increase")
        if self.starts[-1] > COUNTER_MAX:
            raise ValueError("segment start beyond counter range")
        if any(n < 1 for n in self.shifts):
            raise ValueError("gradients must be 1/2**n with n >= 1")

    @property
    def n_segments(self) -> int:
        return len(self.starts)

    def evaluate(self, b):
        """Integer approximation of 1.75*sqrt(b); works on ints and integer arrays."""
        b_arr = np.asarray(b, dtype=np.int64)
        seg = np.searchsorted(np.asarray(self.starts), b_arr, side="right") - 1
        shifts = np.asarray(self.shifts, dtype=np.int64)[seg]
        offsets = np.asarray(self.offsets, dtype=np.int64)[seg]
        out = np.maximum((b_arr >> shifts) + offsets, 0)
        return int(out) if out.ndim == 0 else out

    def errors(self) -> np.ndarray:
        return self.evaluate(DOMAIN) - SQRT_GAIN * np.sqrt(DOMAIN)

    def max_error(self) -> float:
        return float(np.abs(self.errors()).max())

    def segments(self) -> list[tuple[int, int, int, int]]:
        ends = list(self.starts[1:]) + [COUNTER_MAX + 1]
        return [(a, e - 1, n, c) for a, e, n, c in zip(self.starts, ends, self.shifts, self.offsets)]


DEFAULT_TABLE = PwlSegmentTable(
    starts=(0, 18, 99, 391, 1444),
    shifts=(1, 3, 4, 5, 6),
    offsets=(0, 6, 12, 24, 47),
)


def _segment_costs(budget: float, max_shift: int):
    """For each segment end ``b``: best SSE, shift and offset for every start ``a <= b``."""
    target = SQRT_GAIN * np.sqrt(DOMAIN)
    resid = {}
    for n in range(1, max_shift + 1):
        r = target - (DOMAIN >> n)
        resid[n] = (r, np.concatenate([[0.0], np.cumsum(r)]), np.concatenate([[0.0], np.cumsum(r * r)]))
    costs, shifts, offsets = [], [], []
    for b in range(COUNTER_MAX + 1):
        a = np.arange(b + 1)
        length = b + 1 - a
        best = np.full(b + 1, np.inf)
        best_n = np.zeros(b + 1, np.int64)
        best_c = np.zeros(b + 1, np.int64)
        for n, (r, s1, s2) in resid.items():
            seg = r[: b + 1][::-1]
            hi_r = np.maximum.accumulate(seg)[::-1]
            lo_r = np.minimum.accumulate(seg)[::-1]
            # integer offsets keeping |r - c| < budget on the whole segment
            c_lo = np.floor(hi_r - budget) + 1
            c_hi = np.ceil(lo_r + budget) - 1
            total = s1[b + 1] - s1[a]
            c = np.clip(np.round(total / length), c_lo, c_hi)
            ok = c_lo <= c_hi
            # exact at the origin: the first segment has no offset
            ok[0] &= (c_lo[0] <= 0) & (c_hi[0] >= 0)
            c[0] = 0
            sse = (s2[b + 1] - s2[a]) - 2 * c * total + length * c * c
            sse = np.where(ok, sse, np.inf)
            better = sse < best
            best = np.where(better, sse, best)
            best_n = np.where(better, n, best_n)
            best_c = np.where(better, c, best_c)
        costs.append(best)
        shifts.append(best_n)
        offsets.append(best_c)
    return costs, shifts, offsets


@lru_cache(maxsize=8)
def build_pwl_table(max_error_budget: float = 3.0, n_segments: int | None = None,
                    max_shift: int = 12, max_segments: int = 24) -> PwlSegmentTable:
    """Least-squares fit of the shift-and-add approximation over B in [0, 4095].

    Segments minimise the total squared error to ``1.75*sqrt(B)`` subject to a
    maximum absolute error strictly below ``max_error_budget`` and ``approx(0) == 0``.
    With ``n_segments=None`` the smallest feasible segment count is used.
    Raises :class:`PwlFitError` when the budget cannot be met.
    """
    k_max = n_segments if n_segments is not None else max_segments
    costs, shifts, offsets = _segment_costs(max_error_budget, max_shift)
    size = COUNTER_MAX + 2
    # dp[k, e]: minimal SSE covering [0, e) with k segments
    dp = np.full((k_max + 1, size), np.inf)
    dp[0, 0] = 0.0
    arg = np.zeros((k_max + 1, size), np.int64)
    rows = np.arange(k_max)
    for b in range(COUNTER_MAX + 1):
        tot = dp[:k_max, : b + 1] + costs[b][None, :]
        am = np.argmin(tot, axis=1)
        dp[1:, b + 1] = tot[rows, am]
        arg[1:, b + 1] = am
    final = dp[:, COUNTER_MAX + 1]
    if n_segments is not None:
        k = n_segments
        if not np.isfinite(final[k]):
            raise PwlFitError(f"error budget {max_error_budget} unattainable with {k} segments")
    else:
        feasible = np.flatnonzero(np.isfinite(final))
        if len(feasible) == 0:
            raise PwlFitError(f"error budget {max_error_budget} unattainable with <= {k_max} segments")
        k = int(feasible[0])
    segs = []
    e = COUNTER_MAX + 1
    while k > 0:
        a = int(arg[k, e])
        b = e - 1
        segs.append((a, int(shifts[b][a]), int(offsets[b][a])))
        e = a
        k -= 1
    segs.reverse()
    return PwlSegmentTable(tuple(s[0] for s in segs), tuple(s[1] for s in segs), tuple(s[2] for s in segs))
