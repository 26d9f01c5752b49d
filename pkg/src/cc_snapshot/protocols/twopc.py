"""Two-phase-commit baseline: a trial barrier before every blocking collective.

Each blocking collective is preceded by a non-blocking barrier on the same
group, polled with test.  At a checkpoint request a rank that has not passed
the trial barrier stays put (the others cannot skip it); ranks whose trial
barrier was initiated by every member finish the real collective first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from .base import ProtocolAdapter

TRIAL = "trial"


@dataclass
class TwoPcState:
    in_trial_barrier: bool = False
    ckpt_pending: bool = False
    phase: str = "running"
    trial_request: Optional[str] = None
    trial_calls: Dict[str, int] = field(default_factory=dict)

    def key(self) -> tuple:
        return (self.in_trial_barrier, self.ckpt_pending, self.phase, self.trial_request,
                tuple(sorted(self.trial_calls.items())))


class TwoPcProtocol(ProtocolAdapter):
    name = "2pc"

    def check_workload(self, workload) -> None:
        if workload.has_nonblocking:
            from ..sim import UnsupportedFeatureError

            raise UnsupportedFeatureError("2pc does not support non-blocking collectives")

    def init_rank(self, world, ps) -> TwoPcState:
        return TwoPcState()

    def _trial_passable(self, world, ps) -> bool:
        req = world.requests.get(ps.proto.trial_request)
        if req is None:
            return True
        inst = world.instances.get(req.instance)
        return inst is None or inst.all_entered

    def committed(self, world, ps) -> bool:
        """Past the point where a checkpoint may interrupt this rank."""
        if ps.mode == "coll":
            return True
        return ps.mode == TRIAL and self._trial_passable(world, ps)

    def owns(self, world, ps) -> bool:
        if ps.mode == TRIAL:
            return True
        return ps.proto.ckpt_pending and not self.committed(world, ps)

    def choices(self, world, ps) -> List[Any]:
        if ps.mode != TRIAL:
            return []  # frozen by the pending checkpoint
        if world.request_completable(ps.proto.trial_request):
            return [("trial-test",)]
        return []

    def step(self, world, ps, choice) -> None:
        st: TwoPcState = ps.proto
        if not world.test_request(ps, st.trial_request, protocol=True):
            raise AssertionError("trial test scheduled while incomplete")
        st.in_trial_barrier = False
        st.trial_request = None
        ps.mode = "ready"
        world.enter_collective(ps, world.current_op(ps))

    def enter_wrapper(self, world, ps, op) -> bool:
        st: TwoPcState = ps.proto
        req = world.init_collective(ps, op, space=TRIAL, kind="ibarrier")
        world.counters["extra_sync_events"] += 1
        st.in_trial_barrier = True
        st.trial_request = req.id
        ps.mode = TRIAL
        return False

    twopc_on_blocking_collective = enter_wrapper

    def on_checkpoint_request(self, world) -> None:
        for ps in world.ranks:
            ps.proto.ckpt_pending = True

    def after_step(self, world) -> None:
        if not world.requested or world.snapshot_taken:
            return
        if any(self.committed(world, ps) for ps in world.ranks):
            return
        for ps in world.ranks:
            ps.proto.phase = "safe"
        world.take_snapshot()

    def dump(self, world, ps) -> Dict[str, Any]:
        st: TwoPcState = ps.proto
        return {"phase": st.phase, "in_trial_barrier": st.in_trial_barrier}

    def describe_block(self, world, ps) -> str:
        if ps.mode == TRIAL:
            req = world.requests.get(ps.proto.trial_request)
            inst = world.instances.get(req.instance) if req else None
            missing = sorted(set(inst.members) - inst.entered) if inst else []
            return f"trial barrier (missing ranks {missing})"
        return "checkpoint (frozen before a trial barrier)"
