"""Trace-driven simulator of fabric-attached-memory translation and access control."""

from .addressing import (
    AccessKind,
    AcmStatus,
    RegionLayout,
    Zone,
    acm_block_address,
    bitmap_probe,
    decode_acm,
    decompose_node_address,
    encode_acm,
)
from .broker import Broker
from .config import ExperimentConfig, load_config, parse_config, with_values
from .engine import Simulation, run_experiment
from .errors import (
    AddressFault,
    BrokerError,
    ConfigError,
    FamSimError,
    OutOfMemory,
    SimulationProtocolError,
    TraceFormatError,
)
from .oracle import check_access, outcomes_against_state, reference_outcomes
from .stats import SimStats
from .workload import TraceEvent, WorkloadSpec, generate, load_trace, save_trace

__version__ = "0.1.0"

__all__ = [
    "AccessKind",
    "AcmStatus",
    "AddressFault",
    "Broker",
    "BrokerError",
    "ConfigError",
    "ExperimentConfig",
    "FamSimError",
    "OutOfMemory",
    "RegionLayout",
    "SimStats",
    "Simulation",
    "SimulationProtocolError",
    "TraceEvent",
    "TraceFormatError",
    "WorkloadSpec",
    "Zone",
    "acm_block_address",
    "bitmap_probe",
    "check_access",
    "decode_acm",
    "decompose_node_address",
    "encode_acm",
    "generate",
    "load_config",
    "load_trace",
    "outcomes_against_state",
    "parse_config",
    "reference_outcomes",
    "run_experiment",
    "save_trace",
    "with_values",
    "__version__",
]
