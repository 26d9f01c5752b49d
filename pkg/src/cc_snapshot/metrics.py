"""Count-based overhead metrics for one run."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional


@dataclass
class Metrics:
    protocol: str = "none"
    protocol_messages_before_request: int = 0
    protocol_messages_after_request: int = 0
    extra_sync_events: int = 0
    steps_to_quiesce: Optional[int] = None  # ticks from request to snapshot
    collectives_executed_past_request: Dict[str, int] = field(default_factory=dict)
    drain_iterations: int = 0
    ticks: int = 0
    blocking_collective_calls: int = 0
    nonblocking_inits: int = 0
    p2p_matches: int = 0
    request_tick: Optional[int] = None
    snapshot_tick: Optional[int] = None

    @classmethod
    def from_world(cls, world) -> "Metrics":
        c = world.counters
        quiesce = None
        if world.snapshot_taken and world.request_tick is not None:
            quiesce = world.snapshot_tick - world.request_tick
        return cls(
            protocol=world.protocol.name,
            protocol_messages_before_request=c["protocol_messages_before_request"],
            protocol_messages_after_request=c["protocol_messages_after_request"],
            extra_sync_events=c["extra_sync_events"],
            steps_to_quiesce=quiesce,
            collectives_executed_past_request=dict(sorted(c["collectives_past_request"].items())),
            drain_iterations=c["drain_iterations"],
            ticks=world.tick,
            blocking_collective_calls=c["blocking_collective_calls"],
            nonblocking_inits=c["nonblocking_inits"],
            p2p_matches=c["p2p_matches"],
            request_tick=world.request_tick,
            snapshot_tick=world.snapshot_tick,
        )

    @property
    def protocol_messages(self) -> int:
        return self.protocol_messages_before_request + self.protocol_messages_after_request

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)
