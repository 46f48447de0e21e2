"""Per-SPAD ground-truth scenes, their file formats and synthetic fixtures.

Maps are stored row-major as ``(128, 256)`` arrays (rows x cols of SPADs).
A depth of 0 (or any non-finite / non-positive value) marks "no surface".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ARRAY_COLS, ARRAY_ROWS, SPADS_PER_SIDE

SPAD_ROWS = ARRAY_ROWS * SPADS_PER_SIDE  # 128
SPAD_COLS = ARRAY_COLS * SPADS_PER_SIDE  # 256
SHAPE = (SPAD_ROWS, SPAD_COLS)

NO_SURFACE = 0.0


class SceneError(ValueError):
    pass


def _full(value, dtype=float) -> np.ndarray:
    return np.full(SHAPE, value, dtype=dtype)


def to_macropixels(arr: np.ndarray) -> np.ndarray:
    """``(128, 256)`` SPAD map to ``(32, 64, 16)``, SPADs row-major within each macropixel."""
    v = np.asarray(arr).reshape(ARRAY_ROWS, SPADS_PER_SIDE, ARRAY_COLS, SPADS_PER_SIDE)
    return v.transpose(0, 2, 1, 3).reshape(ARRAY_ROWS, ARRAY_COLS, SPADS_PER_SIDE**2)


@dataclass
class SceneFrame:
    depth_m: np.ndarray = field(default_factory=lambda: _full(NO_SURFACE))
    reflectivity: np.ndarray = field(default_factory=lambda: _full(0.0))
    ambient_rate: np.ndarray = field(default_factory=lambda: _full(0.0))
    spad_enable: np.ndarray = field(default_factory=lambda: _full(True, bool))

    def __post_init__(self):
        self.depth_m = np.asarray(self.depth_m, dtype=float)
        self.reflectivity = np.asarray(self.reflectivity, dtype=float)
        self.ambient_rate = np.asarray(self.ambient_rate, dtype=float)
        self.spad_enable = np.asarray(self.spad_enable, dtype=bool)
        for name in ("depth_m", "reflectivity", "ambient_rate", "spad_enable"):
            arr = getattr(self, name)
            if arr.shape != SHAPE:
                raise SceneError(f"{name} has shape {arr.shape}, expected {SHAPE}")
        if np.any((self.reflectivity < 0) | (self.reflectivity > 1)):
            raise SceneError("reflectivity must lie in [0, 1]")
        if np.any(self.ambient_rate < 0):
            raise SceneError("ambient_rate must be non-negative")

    @property
    def has_surface(self) -> np.ndarray:
        return np.isfinite(self.depth_m) & (self.depth_m > 0)

    def with_enable(self, mask: np.ndarray) -> "SceneFrame":
        return SceneFrame(self.depth_m, self.reflectivity, self.ambient_rate, mask)

    def macropixel_view(self, name: str) -> np.ndarray:
        """Map reshaped to ``(32, 64, 16)``: per macropixel, SPADs in row-major order."""
        return to_macropixels(getattr(self, name))

    def pixel(self, row: int, col: int) -> "ScenePixel":
        return ScenePixel(
            depth_m=self.macropixel_view("depth_m")[row, col].copy(),
            reflectivity=self.macropixel_view("reflectivity")[row, col].copy(),
            ambient_rate=self.macropixel_view("ambient_rate")[row, col].copy(),
            spad_enable=self.macropixel_view("spad_enable")[row, col].copy(),
        )


@dataclass
class ScenePixel:
    """The 16 SPADs of one macropixel."""

    depth_m: np.ndarray
    reflectivity: np.ndarray
    ambient_rate: np.ndarray
    spad_enable: np.ndarray

    @classmethod
    def uniform(cls, depth_m: float, reflectivity: float, ambient_rate: float, n_enabled: int = 16):
        enable = np.zeros(16, bool)
        enable[:n_enabled] = True
        return cls(
            np.full(16, float(depth_m)),
            np.full(16, float(reflectivity)),
            np.full(16, float(ambient_rate)),
            enable,
        )


# --- file formats -----------------------------------------------------------


def save_csv_map(path: str | Path, arr: np.ndarray, fmt: str = "%.6g") -> None:
    np.savetxt(path, np.asarray(arr, dtype=float), delimiter=",", fmt=fmt)


def load_csv_map(path: str | Path, shape: tuple[int, int] = SHAPE) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape != shape:
        raise SceneError(f"{path}: grid is {arr.shape}, expected {shape}")
    return arr


def save_pgm16(path: str | Path, arr: np.ndarray) -> None:
    """Write a binary (P5) 16-bit PGM. Values are clipped to [0, 65535]."""
    data = np.clip(np.rint(np.asarray(arr, dtype=float)), 0, 65535).astype(">u2")
    rows, cols = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm16(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise SceneError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    n = rows * cols * np.dtype(dtype).itemsize
    if len(raw) - pos < n:
        raise SceneError(f"{path}: truncated PGM")
    return np.frombuffer(raw[pos : pos + n], dtype=dtype).reshape(rows, cols).astype(np.int64)


def depth_to_mm(depth_m: np.ndarray) -> np.ndarray:
    d = np.asarray(depth_m, dtype=float)
    return np.where(np.isfinite(d) & (d > 0), d * 1000.0, 0.0)


def _load_map(path: Path, scale: float) -> np.ndarray:
    if path.suffix.lower() == ".pgm":
        return load_pgm16(path).astype(float) * scale
    return load_csv_map(path)


# PGM scale factors: depth in mm, reflectivity in 1/65535 units, ambient in counts/s
PGM_SCALES = {"depth": 1e-3, "reflectivity": 1.0 / 65535, "ambient": 1.0, "enable": 1.0}


def load_scene(depth: str | Path, reflectivity: str | Path, ambient: str | Path,
               enable: str | Path | None = None) -> SceneFrame:
    d = _load_map(Path(depth), PGM_SCALES["depth"])
    r = _load_map(Path(reflectivity), PGM_SCALES["reflectivity"])
    a = _load_map(Path(ambient), PGM_SCALES["ambient"])
    e = _load_map(Path(enable), 1.0) != 0 if enable is not None else _full(True, bool)
    return SceneFrame(d, r, a, e)


def save_scene(scene: SceneFrame, directory: str | Path, stem: str) -> dict[str, str]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entry = {}
    for key, arr in (("depth", scene.depth_m), ("reflectivity", scene.reflectivity),
                     ("ambient", scene.ambient_rate), ("enable", scene.spad_enable.astype(int))):
        name = f"{stem}_{key}.csv"
        save_csv_map(directory / name, np.where(np.isfinite(arr), arr, 0.0))
        entry[key] = name
    return entry


def load_sequence(directory: str | Path) -> list[SceneFrame]:
    """Load a scene sequence from ``directory/manifest.json``.

    The manifest is ``{"frames": [{"depth": ..., "reflectivity": ..., "ambient": ...,
    "enable": ... (optional)}, ...]}`` with paths relative to the directory.
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot read manifest in {directory}: {exc}") from exc
    frames = []
    for entry in manifest.get("frames", []):
        enable = entry.get("enable")
        frames.append(load_scene(directory / entry["depth"], directory / entry["reflectivity"],
                                 directory / entry["ambient"],
                                 directory / enable if enable else None))
    if not frames:
        raise SceneError(f"{directory}: manifest lists no frames")
    return frames


def save_sequence(frames: list[SceneFrame], directory: str | Path) -> None:
    directory = Path(directory)
    entries = [save_scene(f, directory, f"frame{i:04d}") for i, f in enumerate(frames)]
    (directory / "manifest.json").write_text(json.dumps({"frames": entries}, indent=1))


# --- synthetic fixtures -----------------------------------------------------


def flat_scene(depth_m: float, reflectivity: float = 1.0, ambient_rate: float = 0.0) -> SceneFrame:
    return SceneFrame(_full(depth_m), _full(reflectivity), _full(ambient_rate))


def ambient_only(ambient_rate: float) -> SceneFrame:
    return SceneFrame(ambient_rate=_full(ambient_rate))


def approaching_target(n_frames: int, start_m: float, step_m: float, background_m: float,
                       reflectivity: float = 1.0, ambient_rate: float = 0.0,
                       box: tuple[int, int, int, int] = (32, 96, 96, 160)) -> list[SceneFrame]:
    """A rectangular target (SPAD rows r0:r1, cols c0:c1) moving in z by ``step_m`` per frame."""
    r0, r1, c0, c1 = box
    frames = []
    for i in range(n_frames):
        depth = _full(background_m)
        depth[r0:r1, c0:c1] = start_m + i * step_m
        frames.append(SceneFrame(depth, _full(reflectivity), _full(ambient_rate)))
    return frames


def moving_ball(n_frames: int, wall_m: float, ball_m: float, radius_spads: float = 14.0,
                start: tuple[float, float] = (64.0, 40.0), velocity: tuple[float, float] = (0.0, 12.0),
                reflectivity: float = 1.0, ambient_rate: float = 0.0) -> tuple[list[SceneFrame], list[np.ndarray]]:
    """Ball in front of a flat wall, moving laterally. Returns frames and per-frame ball masks."""
    yy, xx = np.mgrid[0:SPAD_ROWS, 0:SPAD_COLS]
    frames, masks = [], []
    for i in range(n_frames):
        cy = start[0] + velocity[0] * i
        cx = start[1] + velocity[1] * i
        mask = (yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= radius_spads**2
        depth = np.where(mask, ball_m, wall_m).astype(float)
        frames.append(SceneFrame(depth, _full(reflectivity), _full(ambient_rate)))
        masks.append(mask)
    return frames, masks


def spad_step_pattern(base_m: float, step_m: float, reflectivity: float = 1.0,
                      ambient_rate: float = 0.0) -> SceneFrame:
    """Depth varying per SPAD inside each macropixel: ``base + step * spad_index``."""
    idx = np.arange(16).reshape(4, 4)
    depth = base_m + step_m * np.tile(idx, (ARRAY_ROWS, ARRAY_COLS))
    return SceneFrame(depth, _full(reflectivity), _full(ambient_rate))


def single_spad_masks() -> list[np.ndarray]:
    """16 enable masks, each enabling SPAD ``k`` (row-major) in every macropixel."""
    masks = []
    for k in range(16):
        tile = np.zeros((4, 4), bool)
        tile[k // 4, k % 4] = True
        masks.append(np.tile(tile, (ARRAY_ROWS, ARRAY_COLS)))
    return masks
