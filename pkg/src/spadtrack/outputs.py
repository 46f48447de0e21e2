"""Per-frame array outputs handed from the sensor array to the readout."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .config import ARRAY_COLS, ARRAY_ROWS, BINS_PER_GATE


@dataclass
class ArrayOutputs:
    """Everything the readout may serialise for one frame, one entry per macropixel.

    In intensity frames ``bins`` holds the 8 SPAD-pair counters instead of
    histogram bins. ``cmm_code`` is the 6-bit sub-bin code
    (``(peak_position - 1) * 8``), meaningful only where ``cmm_valid``.
    """

    gate: np.ndarray
    peak_flag: np.ndarray
    peak_id: np.ndarray
    overflow: np.ndarray
    bins: np.ndarray
    cmm_code: np.ndarray
    cmm_valid: np.ndarray
    gate_changed: np.ndarray

    @classmethod
    def zeros(cls, rows: int = ARRAY_ROWS, cols: int = ARRAY_COLS) -> "ArrayOutputs":
        shape = (rows, cols)
        return cls(
            gate=np.zeros(shape, np.int64),
            peak_flag=np.zeros(shape, bool),
            peak_id=np.ones(shape, np.int64),
            overflow=np.zeros(shape, bool),
            bins=np.zeros(shape + (BINS_PER_GATE,), np.int64),
            cmm_code=np.zeros(shape, np.int64),
            cmm_valid=np.zeros(shape, bool),
            gate_changed=np.zeros(shape, bool),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.gate.shape)

    def copy(self) -> "ArrayOutputs":
        return ArrayOutputs(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def check(self) -> None:
        shape = self.shape
        for f in fields(self):
            arr = getattr(self, f.name)
            want = shape + (BINS_PER_GATE,) if f.name == "bins" else shape
            if arr.shape != want:
                raise ValueError(f"{f.name} has shape {arr.shape}, expected {want}")
