from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from factories import random_outputs
from spadtrack.readout import (EncodedFrame, FrameDecodeError, FrameMode, FrameStructureError, OutputFormat,
                               SmartFilter, bits_per_macropixel, data_volume_report, decode_frame,
                               encode_frame, export_csv, keep_mask, max_frame_rate, nonzero_mask)

DATA = Path(__file__).parent / "data"

FIELDS = {
    "histogram": ["gate:7", "flag:1", "pid:3", "ovf:1"] + [f"bin{t}:12" for t in range(8)],
    "bin_depth": ["gate:7", "flag:1", "pid:3", "ovf:1"],
    "subbin_depth": ["gate:7", "cmm:6", "valid:1", "ovf:1"],
    "intensity": [f"bin{t}:12" for t in range(8)],
}


def oracle_payload(out, mode: FrameMode) -> bytes:
    """Bit-by-bit reference encoder following the documented layout."""
    keep = keep_mask(out, mode)
    bits = []
    for r in range(out.shape[0]):
        if mode.row_skip and not out.peak_flag[r].any():
            continue
        for c in range(out.shape[1]):
            vals = {"gate": out.gate[r, c], "flag": out.peak_flag[r, c], "pid": out.peak_id[r, c] - 1,
                    "ovf": out.overflow[r, c], "cmm": out.cmm_code[r, c] if out.cmm_valid[r, c] else 0,
                    "valid": out.cmm_valid[r, c]}
            for t in range(8):
                vals[f"bin{t}"] = out.bins[r, c, t]
            for f in FIELDS[mode.format.value]:
                name, width = f.split(":")
                v = int(vals[name]) if keep[r, c] else 0
                bits += [(v >> i) & 1 for i in range(int(width))]
    out_bytes = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        out_bytes[i // 8] |= b << (i % 8)
    return bytes(out_bytes)


ALL_MODES = [FrameMode(f, s, k) for f in ("histogram", "bin_depth", "subbin_depth")
             for s in SmartFilter for k in (False, True)] + [FrameMode("intensity")]


def test_bit_budgets():
    assert [bits_per_macropixel(f) for f in ("histogram", "bin_depth", "subbin_depth", "intensity")] == \
        [108, 12, 15, 96]


def test_frame_rates_match_line_budget():
    assert max_frame_rate("histogram") == oracles.frame_rate(108) == 28935
    assert max_frame_rate("bin_depth") == oracles.frame_rate(12) == 260416
    assert max_frame_rate("subbin_depth") == oracles.frame_rate(15) == 208333


def test_intensity_mode_restrictions():
    with pytest.raises(ValueError):
        FrameMode("intensity", SmartFilter.PEAK_ONLY)
    with pytest.raises(ValueError):
        FrameMode("intensity", row_skip=True)


@pytest.mark.parametrize("mode", ALL_MODES, ids=lambda m: f"{m.format.value}-{m.smart.value}-{m.row_skip}")
def test_encoder_matches_reference_bits(mode, rng):
    out = random_outputs(rng, 6, 5)
    out.peak_flag[2] = False  # at least one skippable row
    enc = encode_frame(out, mode)
    assert enc.payload == oracle_payload(out, mode)


@pytest.mark.parametrize("mode", ALL_MODES, ids=lambda m: f"{m.format.value}-{m.smart.value}-{m.row_skip}")
def test_roundtrip_carried_fields(mode, rng):
    out = random_outputs(rng)
    enc = EncodedFrame.from_bytes(encode_frame(out, mode).to_bytes())
    dec = decode_frame(enc)
    keep = keep_mask(out, mode) & ~enc.skip_map[:, None]
    names = [f.split(":")[0] for f in FIELDS[mode.format.value]]
    pairs = {"gate": (out.gate, dec.gate), "flag": (out.peak_flag, dec.peak_flag),
             "pid": (out.peak_id, dec.peak_id), "ovf": (out.overflow, dec.overflow),
             "valid": (out.cmm_valid, dec.cmm_valid), "cmm": (out.cmm_code, dec.cmm_code)}
    for name in names:
        if name.startswith("bin"):
            t = int(name[3:])
            a, b = out.bins[..., t], dec.bins[..., t]
        else:
            a, b = pairs[name]
        assert np.array_equal(np.where(keep, a, b), b)
    # re-encoding the decoded frame reproduces the bitstream
    assert encode_frame(dec, FrameMode(mode.format)).payload == encode_frame(
        _masked(out, keep), FrameMode(mode.format)).payload


def _masked(out, keep):
    from spadtrack.outputs import ArrayOutputs
    z = ArrayOutputs.zeros(*out.shape)
    m = out.copy()
    for name in ("gate", "peak_flag", "peak_id", "overflow", "cmm_code", "cmm_valid"):
        setattr(m, name, np.where(keep, getattr(m, name), getattr(z, name)))
    m.bins = np.where(keep[..., None], m.bins, 0)
    return m


def test_golden_frame_bytes():
    for fmt in ("histogram", "bin_depth", "subbin_depth"):
        mode = FrameMode(fmt, SmartFilter.PEAK_ONLY, row_skip=True)
        out = random_outputs(np.random.default_rng(99), 8, 8)
        out.peak_flag[3] = False
        golden = (DATA / f"frame_{fmt}.bin").read_bytes()
        assert encode_frame(out, mode).to_bytes() == golden
        dec = EncodedFrame.from_bytes(golden)
        assert dec.mode == mode and dec.skip_map[3] and dec.skip_map.sum() == 1


def test_payload_size_ratios(rng):
    out = random_outputs(rng)
    sizes = {f: encode_frame(out, FrameMode(f)).payload_bits for f in ("histogram", "bin_depth", "subbin_depth")}
    assert sizes["bin_depth"] * 108 == sizes["histogram"] * 12
    assert sizes["subbin_depth"] * 108 == sizes["histogram"] * 15


def test_row_skip_shrinks_payload(rng):
    out = random_outputs(rng)
    out.peak_flag[:10] = False
    full = encode_frame(out, FrameMode("histogram"))
    skip = encode_frame(out, FrameMode("histogram", row_skip=True))
    assert skip.payload_bits == full.payload_bits * 22 // 32
    assert skip.stats.max_fps_payload > full.stats.max_fps_payload
    assert skip.stats.max_fps_full_slot == full.stats.max_fps_full_slot


def test_motion_filter_zeroes_static_pixels(rng):
    out = random_outputs(rng)
    enc = encode_frame(out, FrameMode("bin_depth", SmartFilter.MOTION_ONLY))
    nz = nonzero_mask(enc)
    assert not nz[~out.gate_changed].any()


def test_structure_errors(rng):
    out = random_outputs(rng)
    out.gate[0, 0] = 128
    with pytest.raises(FrameStructureError):
        encode_frame(out, FrameMode("bin_depth"))
    out = random_outputs(rng)
    out.bins = out.bins[..., :7]
    with pytest.raises(FrameStructureError):
        encode_frame(out, FrameMode("histogram"))


def test_decode_errors(rng):
    data = encode_frame(random_outputs(rng), FrameMode("bin_depth")).to_bytes()
    with pytest.raises(FrameDecodeError):
        EncodedFrame.from_bytes(data[:10])
    with pytest.raises(FrameDecodeError):
        EncodedFrame.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(FrameDecodeError):
        EncodedFrame.from_bytes(data[:-3])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_roundtrip_any_geometry(rows, cols, seed):
    out = random_outputs(np.random.default_rng(seed), rows, cols)
    enc = EncodedFrame.from_bytes(encode_frame(out, FrameMode("histogram")).to_bytes())
    dec = decode_frame(enc)
    assert np.array_equal(dec.bins, out.bins) and np.array_equal(dec.gate, out.gate)


def test_volume_report(rng):
    frames = [encode_frame(random_outputs(rng), m) for m in
              (FrameMode("histogram"), FrameMode("bin_depth"), FrameMode("bin_depth", SmartFilter.MOTION_ONLY))]
    rep = data_volume_report(frames)
    assert set(rep) == {"histogram", "bin_depth", "bin_depth/motion_only"}
    assert rep["bin_depth"].compression_vs_histogram == pytest.approx(12 / 108)
    assert rep["bin_depth/motion_only"].nonzero_fraction < rep["bin_depth"].nonzero_fraction
    with pytest.raises(ValueError):
        data_volume_report([])


def test_export_csv(tmp_path, rng):
    out = random_outputs(rng, 2, 3)
    export_csv(out, "subbin_depth", tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "row,col,gate,cmm,valid,overflow"
    assert len(lines) == 7
