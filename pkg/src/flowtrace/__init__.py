"""Flow decoding from fingertip force-control performance."""

from .decode import DecoderModel, FlowProbe
from .metrics import METRIC_NAMES, MetricsVector
from .simulate import FlowProcess, LoopParams, SimParams
from .task import ForceTrace, ProbeSchedule, StaircaseState, TrialConfig, TrialRecord

__version__ = "0.1.0"

__all__ = [
    "DecoderModel",
    "FlowProbe",
    "FlowProcess",
    "ForceTrace",
    "LoopParams",
    "METRIC_NAMES",
    "MetricsVector",
    "ProbeSchedule",
    "SimParams",
    "StaircaseState",
    "TrialConfig",
    "TrialRecord",
    "__version__",
]
