"""Congestion covert and side channels on a simulated multi-GPU interconnect."""

from ._kernels import BACKEND
from .covert import ChannelConfig, build_frame, compute_metrics, decode_bits, encode_text, transmit
from .errors import ConfigError, LinkSpyError, RoutingError
from .probe import Calibration, ProbeAgent, ProbeSample, Trace
from .sim_core import LatencyModel, Simulator, TransferRequest, build_topology

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Calibration",
    "ChannelConfig",
    "ConfigError",
    "LatencyModel",
    "LinkSpyError",
    "ProbeAgent",
    "ProbeSample",
    "RoutingError",
    "Simulator",
    "Trace",
    "TransferRequest",
    "build_frame",
    "build_topology",
    "compute_metrics",
    "decode_bits",
    "encode_text",
    "transmit",
]
