"""Frame readout: per-mode bit budgets, smart filters, row skipping and the codec.

Payload layout
--------------
Each macropixel payload is a concatenation of fields, each written least
significant bit first; the frame bitstream is packed into bytes LSB first.
Field order per output format:

* ``histogram`` (108 bits): gate(7) flag(1) peak_id-1(3) overflow(1) bin1..bin8(12 each)
* ``bin_depth`` (12 bits): gate(7) flag(1) peak_id-1(3) overflow(1)
* ``subbin_depth`` (15 bits): gate(7) cmm(6) valid(1) overflow(1)
* ``intensity`` (96 bits): counter1..counter8(12 each)

Macropixels are emitted row-major (row 0 first), skipped rows omitted.

Binary frame file
-----------------
16-byte little-endian header ``<4sBBBBHHI``: magic ``b"SPDF"``, version (1),
format code, filter code, flags (bit 0: row skipping), columns, rows, byte
offset of the skip bitmap. The payload starts at byte 16; the skip bitmap
(one bit per row, LSB first, 1 = skipped) follows the payload.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .config import ARRAY_COLS, ARRAY_ROWS, BINS_PER_GATE
from .outputs import ArrayOutputs

OUTPUT_LINES = 64
LINE_RATE_HZ = 100e6
MAGIC = b"SPDF"
VERSION = 1
HEADER = struct.Struct("<4sBBBBHHI")


class OutputFormat(str, Enum):
    HISTOGRAM = "histogram"
    BIN_DEPTH = "bin_depth"
    SUBBIN_DEPTH = "subbin_depth"
    INTENSITY = "intensity"


class SmartFilter(str, Enum):
    NONE = "none"
    PEAK_ONLY = "peak_only"
    MOTION_ONLY = "motion_only"


_FORMAT_CODES = {f: i for i, f in enumerate(OutputFormat)}
_FILTER_CODES = {f: i for i, f in enumerate(SmartFilter)}


class FrameStructureError(ValueError):
    """Array outputs cannot be encoded (bad dimensions or out-of-range fields)."""


class FrameDecodeError(ValueError):
    """A serialised frame is truncated or inconsistent."""


@dataclass(frozen=True)
class FrameMode:
    format: OutputFormat = OutputFormat.HISTOGRAM
    smart: SmartFilter = SmartFilter.NONE
    row_skip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "format", OutputFormat(self.format))
        object.__setattr__(self, "smart", SmartFilter(self.smart))
        if self.format is OutputFormat.INTENSITY and (self.smart is not SmartFilter.NONE or self.row_skip):
            raise ValueError("intensity frames support neither smart filters nor row skipping")


_BIN_FIELDS = [(f"bin{t}", 12) for t in range(1, BINS_PER_GATE + 1)]
_PEAK_FIELDS = [("gate", 7), ("flag", 1), ("peak_id", 3), ("overflow", 1)]
LAYOUTS: dict[OutputFormat, list[tuple[str, int]]] = {
    OutputFormat.HISTOGRAM: _PEAK_FIELDS + _BIN_FIELDS,
    OutputFormat.BIN_DEPTH: _PEAK_FIELDS,
    OutputFormat.SUBBIN_DEPTH: [("gate", 7), ("cmm", 6), ("valid", 1), ("overflow", 1)],
    OutputFormat.INTENSITY: _BIN_FIELDS,
}


def bits_per_macropixel(fmt: OutputFormat | FrameMode | str) -> int:
    if isinstance(fmt, FrameMode):
        fmt = fmt.format
    return sum(w for _, w in LAYOUTS[OutputFormat(fmt)])


def max_frame_rate(fmt: OutputFormat | FrameMode | str, n_pixels: int = ARRAY_ROWS * ARRAY_COLS) -> int:
    """Frames per second the 64 x 100 MHz output lines sustain for a full frame."""
    return math.floor(OUTPUT_LINES * LINE_RATE_HZ / (n_pixels * bits_per_macropixel(fmt)))


@dataclass
class FrameStats:
    total_bits: int
    nonzero_count: int
    n_pixels: int
    # payload-only: skipped rows free their slots; full-slot: every row costs time
    max_fps_payload: float
    max_fps_full_slot: float


@dataclass
class EncodedFrame:
    mode: FrameMode
    rows: int
    cols: int
    skip_map: np.ndarray
    payload: bytes
    payload_bits: int
    stats: FrameStats = field(repr=False)

    def to_bytes(self) -> bytes:
        skip_offset = HEADER.size + len(self.payload)
        header = HEADER.pack(MAGIC, VERSION, _FORMAT_CODES[self.mode.format],
                             _FILTER_CODES[self.mode.smart], int(self.mode.row_skip),
                             self.cols, self.rows, skip_offset)
        bitmap = np.packbits(self.skip_map.astype(np.uint8), bitorder="little").tobytes()
        return header + self.payload + bitmap

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncodedFrame":
        if len(data) < HEADER.size:
            raise FrameDecodeError("frame shorter than header")
        magic, version, fcode, scode, flags, cols, rows, skip_offset = HEADER.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise FrameDecodeError("bad magic or version")
        try:
            mode = FrameMode(list(OutputFormat)[fcode], list(SmartFilter)[scode], bool(flags & 1))
        except (IndexError, ValueError) as exc:
            raise FrameDecodeError(f"bad mode fields: {exc}") from exc
        bitmap_len = (rows + 7) // 8
        if skip_offset < HEADER.size or skip_offset + bitmap_len != len(data):
            raise FrameDecodeError("frame length inconsistent with header")
        skip = np.unpackbits(np.frombuffer(data[skip_offset:], np.uint8), count=rows,
                             bitorder="little").astype(bool)
        payload = data[HEADER.size:skip_offset]
        bits = int((~skip).sum()) * cols * bits_per_macropixel(mode)
        if (bits + 7) // 8 != len(payload):
            raise FrameDecodeError("payload length inconsistent with skip map")
        frame = cls(mode, rows, cols, skip, payload, bits, None)
        frame.stats = _stats(frame, nonzero_mask(frame))
        return frame


def _field_codes(outputs: ArrayOutputs, fmt: OutputFormat) -> dict[str, np.ndarray]:
    codes = {
        "gate": outputs.gate,
        "flag": outputs.peak_flag.astype(np.int64),
        "peak_id": outputs.peak_id - 1,
        "overflow": outputs.overflow.astype(np.int64),
        "cmm": np.where(outputs.cmm_valid, outputs.cmm_code, 0),
        "valid": outputs.cmm_valid.astype(np.int64),
    }
    for t in range(BINS_PER_GATE):
        codes[f"bin{t + 1}"] = outputs.bins[..., t]
    return {name: np.asarray(codes[name], dtype=np.int64) for name, _ in LAYOUTS[fmt]}


def keep_mask(outputs: ArrayOutputs, mode: FrameMode) -> np.ndarray:
    """Macropixels whose payload survives the smart filter."""
    if mode.smart is SmartFilter.PEAK_ONLY:
        return outputs.peak_flag.copy()
    if mode.smart is SmartFilter.MOTION_ONLY:
        return outputs.gate_changed.copy()
    return np.ones(outputs.shape, bool)


def skip_rows(outputs: ArrayOutputs, mode: FrameMode) -> np.ndarray:
    if not mode.row_skip:
        return np.zeros(outputs.shape[0], bool)
    return ~outputs.peak_flag.any(axis=1)


def encode_frame(outputs: ArrayOutputs, mode: FrameMode) -> EncodedFrame:
    try:
        outputs.check()
    except ValueError as exc:
        raise FrameStructureError(str(exc)) from exc
    rows, cols = outputs.shape
    layout = LAYOUTS[mode.format]
    codes = _field_codes(outputs, mode.format)
    keep = keep_mask(outputs, mode)
    skip = skip_rows(outputs, mode)

    columns = []
    for name, width in layout:
        v = codes[name]
        if v.min(initial=0) < 0 or v.max(initial=0) >= (1 << width):
            raise FrameStructureError(f"field {name} does not fit in {width} bits")
        v = np.where(keep, v, 0)[~skip].reshape(-1)
        columns.append((v[:, None] >> np.arange(width)) & 1)
    bits = np.concatenate(columns, axis=1) if columns else np.zeros((0, 0), np.int64)
    flat = bits.astype(np.uint8).reshape(-1)
    payload = np.packbits(flat, bitorder="little").tobytes()
    frame = EncodedFrame(mode, rows, cols, skip, payload, int(flat.size), None)
    present = np.zeros((rows, cols), bool)
    present[~skip] = bits.reshape(int((~skip).sum()), cols, bits_per_macropixel(mode)).any(axis=-1)
    frame.stats = _stats(frame, present)
    return frame


def _stats(frame: EncodedFrame, nonzero: np.ndarray) -> FrameStats:
    n_pixels = frame.rows * frame.cols
    budget = OUTPUT_LINES * LINE_RATE_HZ
    full = n_pixels * bits_per_macropixel(frame.mode)
    return FrameStats(
        total_bits=frame.payload_bits,
        nonzero_count=int(nonzero.sum()),
        n_pixels=n_pixels,
        max_fps_payload=budget / frame.payload_bits if frame.payload_bits else math.inf,
        max_fps_full_slot=budget / full,
    )


def _unpack(frame: EncodedFrame) -> np.ndarray:
    """Payload bits as ``(present_rows, cols, bits_per_macropixel)``."""
    bpm = bits_per_macropixel(frame.mode)
    n_present = int((~frame.skip_map).sum())
    expected = n_present * frame.cols * bpm
    if frame.payload_bits != expected or len(frame.payload) * 8 < expected:
        raise FrameDecodeError(f"payload holds {len(frame.payload) * 8} bits, expected {expected}")
    bits = np.unpackbits(np.frombuffer(frame.payload, np.uint8), count=expected, bitorder="little")
    return bits.reshape(n_present, frame.cols, bpm).astype(np.int64)


def nonzero_mask(frame: EncodedFrame) -> np.ndarray:
    """Macropixels with a non-zero payload; skipped rows count as zero."""
    mask = np.zeros((frame.rows, frame.cols), bool)
    mask[~frame.skip_map] = _unpack(frame).any(axis=-1)
    return mask


def decode_frame(frame: EncodedFrame) -> ArrayOutputs:
    """Inverse of :func:`encode_frame` on the fields the format carries.

    Fields not carried by the format, zeroed payloads and skipped rows decode
    to the all-zero code (``peak_id`` 1).
    """
    bits = _unpack(frame)
    out = ArrayOutputs.zeros(frame.rows, frame.cols)
    present = ~frame.skip_map
    pos = 0
    for name, width in LAYOUTS[frame.mode.format]:
        vals = (bits[..., pos:pos + width] << np.arange(width)).sum(axis=-1)
        pos += width
        if name == "gate":
            out.gate[present] = vals
        elif name == "flag":
            out.peak_flag[present] = vals.astype(bool)
        elif name == "peak_id":
            out.peak_id[present] = vals + 1
        elif name == "overflow":
            out.overflow[present] = vals.astype(bool)
        elif name == "cmm":
            out.cmm_code[present] = vals
        elif name == "valid":
            out.cmm_valid[present] = vals.astype(bool)
        else:
            out.bins[present, :, int(name[3:]) - 1] = vals
    return out


def export_csv(outputs: ArrayOutputs, fmt: OutputFormat | str, path: str | Path) -> None:
    """One row per macropixel with the fields the format carries (decoded values)."""
    fmt = OutputFormat(fmt)
    names = [n for n, _ in LAYOUTS[fmt]]
    codes = _field_codes(outputs, fmt)
    if "peak_id" in codes:
        codes["peak_id"] = codes["peak_id"] + 1
    rows, cols = outputs.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", *names])
        for r in range(rows):
            for c in range(cols):
                w.writerow([r, c, *(int(codes[n][r, c]) for n in names)])


@dataclass
class FormatVolume:
    frames: int = 0
    total_bits: int = 0
    nonzero: int = 0
    pixels: int = 0

    @property
    def nonzero_fraction(self) -> float:
        return self.nonzero / self.pixels if self.pixels else 0.0

    @property
    def compression_vs_histogram(self) -> float:
        """Bits read out relative to full histogram frames of the same size."""
        full = self.pixels * bits_per_macropixel(OutputFormat.HISTOGRAM)
        return self.total_bits / full if full else 0.0


def data_volume_report(frames: list[EncodedFrame]) -> dict[str, FormatVolume]:
    """Totals per ``format[/filter][+skip]`` key over a sequence of frames."""
    if not frames:
        raise ValueError("need at least one frame")
    report: dict[str, FormatVolume] = {}
    for f in frames:
        key = f.mode.format.value
        if f.mode.smart is not SmartFilter.NONE:
            key += "/" + f.mode.smart.value
        if f.mode.row_skip:
            key += "+skip"
        v = report.setdefault(key, FormatVolume())
        v.frames += 1
        v.total_bits += f.stats.total_bits
        v.nonzero += f.stats.nonzero_count
        v.pixels += f.stats.n_pixels
    return report
