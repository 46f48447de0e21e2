"""Bit-accurate model of a gated, peak-tracking SPAD histogramming sensor with a photon simulator."""

from .array import ArrayState, FrameResult, intensity_frame, step_frame, time_multiplexed_capture
from .cmm import cmm_fixed, cmm_reference
from .config import ConfigError, SensorConfig, load_config
from .pixel import Histogram, MacropixelState, PeakReport, Status, comparator_tree, step_exposure, threshold
from .pwl import DEFAULT_TABLE, build_pwl_table
from .readout import FrameMode, OutputFormat, SmartFilter, decode_frame, encode_frame, max_frame_rate
from .scene import SceneFrame, ScenePixel

__version__ = "0.1.0"

__all__ = [
    "ArrayState", "FrameResult", "intensity_frame", "step_frame", "time_multiplexed_capture",
    "cmm_fixed", "cmm_reference", "ConfigError", "SensorConfig", "load_config",
    "Histogram", "MacropixelState", "PeakReport", "Status", "comparator_tree", "step_exposure", "threshold",
    "DEFAULT_TABLE", "build_pwl_table", "FrameMode", "OutputFormat", "SmartFilter", "decode_frame",
    "encode_frame", "max_frame_rate", "SceneFrame", "ScenePixel",
]
