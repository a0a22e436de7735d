"""Simulation of a three-brain BrainNet triad.

Two Senders watch a Tetris-like block and signal Rotate or NoRotate by
attending one of two flickering LEDs; their SSVEP responses are decoded
and relayed to a Receiver as phosphene pulses.  The Receiver combines the
two pulses, decides, and learns over the session which Sender to trust.
"""

__version__ = "0.1.0"

from .agents import PhospheneModel, SenderPolicy, TrustState, pest_calibrate
from .analysis import AnalysisReport, mi_bias, mutual_information, report
from .config import HarnessConfig, RunManifest, load_config
from .errors import (
    AnalysisError,
    BrainNetError,
    CalibrationError,
    ConfigurationError,
    LogFormatError,
    ProtocolError,
    SessionAborted,
)
from .game import Decision, TrialState, generate_schedule
from .session import AgentConfig, SessionConfig, SessionSeeds, run_session
from .sessionlog import SessionLog, replay
from .ssvep import SsvepDecoder, SsvepParams

__all__ = [
    "AgentConfig",
    "AnalysisError",
    "AnalysisReport",
    "BrainNetError",
    "CalibrationError",
    "ConfigurationError",
    "Decision",
    "HarnessConfig",
    "LogFormatError",
    "PhospheneModel",
    "ProtocolError",
    "RunManifest",
    "SenderPolicy",
    "SessionAborted",
    "SessionConfig",
    "SessionLog",
    "SessionSeeds",
    "SsvepDecoder",
    "SsvepParams",
    "TrialState",
    "TrustState",
    "generate_schedule",
    "load_config",
    "mi_bias",
    "mutual_information",
    "pest_calibrate",
    "replay",
    "report",
    "run_session",
]
