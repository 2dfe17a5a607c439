"""Stable, consistent cluster membership.

K-ring monitoring overlay, multi-process cut detection and a leaderless
fast-path view change, plus a deterministic simulator and analysis tools.
"""

from .core import (Alert, AlertKind, Configuration, CutProposal, Endpoint, InvariantError,
                   Member, NodeId, ProtocolParams, RapidError, StaleProposalError, apply_cut,
                   derive_config_id)
from .cutdetect import CutDetectionState, ReportMode
from .consensus import ViewChange, VoteState, fast_quorum
from .engine import (DefaultProbeDetector, EdgeMonitor, EngineSettings, Mode, Node, Status,
                     Verdict, ViewChangeEvent)
from .simnet import RunReport, Scenario, run
from .topology import KRingTopology, SpectralReport, build, spectral_gap

__version__ = "0.1.0"

__all__ = [
    "Alert", "AlertKind", "Configuration", "CutDetectionState", "CutProposal",
    "DefaultProbeDetector", "EdgeMonitor", "Endpoint", "EngineSettings", "InvariantError",
    "KRingTopology", "Member", "Mode", "Node", "NodeId", "ProtocolParams", "RapidError",
    "ReportMode", "RunReport", "Scenario", "SpectralReport", "StaleProposalError", "Status",
    "Verdict", "ViewChange", "ViewChangeEvent", "VoteState", "apply_cut", "build",
    "derive_config_id", "fast_quorum", "run", "spectral_gap",
]
