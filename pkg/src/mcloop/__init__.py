"""Simulator and receiver chain for a closed-loop media-modulation molecular communication link."""

from .channel import ChannelSimConfig, simulate, simulate_trace, single_responses
from .detect import DetectorConfig, ThresholdSet, decode_trace
from .model import ModulationConfig, PhysicalConfig, Trace, build_tx_schedule

__all__ = [
    "ChannelSimConfig",
    "DetectorConfig",
    "ModulationConfig",
    "PhysicalConfig",
    "ThresholdSet",
    "Trace",
    "build_tx_schedule",
    "decode_trace",
    "simulate",
    "simulate_trace",
    "single_responses",
]

__version__ = "0.1.0"
