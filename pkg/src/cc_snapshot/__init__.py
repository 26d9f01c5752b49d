"""Collective Clock checkpoint coordination: simulator, protocols and oracle."""

from .core import (
    CommunicatorHandle,
    Ggid,
    GroupMembership,
    InvalidGroupError,
    RequestHandle,
    RequestKind,
    RequestState,
    SeqTable,
    TargetTable,
    TargetUpdateMsg,
    compute_ggid,
    seq_get,
    target_merge,
)
from .metrics import Metrics
from .oracle import (
    Bounds,
    ExecutionGraph,
    SnapshotCut,
    build_graph,
    check_snapshot,
    cut_from_events,
    explore_interleavings,
)
from .protocols import CcProtocol, CcState, NoProtocol, TwoPcProtocol, get_protocol
from .sim import (
    DeadlockError,
    ErroneousProgramError,
    ProgressPolicy,
    ProtocolInvariantError,
    RunawayError,
    SimConfig,
    SimEvent,
    SimResult,
    UnsupportedFeatureError,
    World,
    run,
)
from .workload import (
    Workload,
    WorkloadParseError,
    generate_random_workload,
    load_workload,
    parse_workload,
    serialize_workload,
    validate_correctness,
)

__all__ = [name for name in dir() if not name.startswith("_")]
