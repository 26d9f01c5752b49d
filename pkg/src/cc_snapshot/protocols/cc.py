"""Collective Clock coordination.

Every rank counts its collective calls per group (SEQ).  A checkpoint request
fixes, per group, the target TARGET = max over members of SEQ.  Ranks keep
running until every SEQ meets its TARGET; a rank whose call overshoots the
target raises it and tells the other members, which may force them to run
further.  Once all targets are met, nothing is in flight and nobody is inside
a collective, pending non-blocking requests are drained and the snapshot is
taken.

Two deliberate differences from a literal reading of the wrapper:

* The wait after a collective only consumes already-delivered updates; the
  blocking wait happens at the next wrapper entry.  A blocking post-wait can
  park a rank that still owes a point-to-point message to a peer with unmet
  targets.
* A rank blocked outside the wrapper (in a receive, a wait, or finished)
  still accepts target updates, as a helper thread would, so an update in
  flight never holds up quiescence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List

from ..core import Ggid, SeqTable, TargetTable, TargetUpdateMsg
from .base import ProtocolAdapter


class Phase(str, enum.Enum):
    RUNNING = "running"
    DRAINING = "draining"
    SAFE = "safe"


@dataclass
class CcState:
    seq: SeqTable = field(default_factory=SeqTable)
    target: TargetTable = field(default_factory=TargetTable)
    pending_collective_requests: List[str] = field(default_factory=list)
    pending_ggids: Dict[str, Ggid] = field(default_factory=dict)
    phase: Phase = Phase.RUNNING
    forced_resumes: int = 0  # times an update moved this rank off all-targets-met

    @property
    def ckpt_pending(self) -> bool:
        return self.target.ckpt_pending

    def targets_met(self) -> bool:
        return all(self.seq[g] >= v for g, v in self.target.items())

    def may_proceed(self) -> bool:
        """The wrapper exit test: no checkpoint, or some target still unmet."""
        return not self.ckpt_pending or not self.targets_met()

    def key(self) -> tuple:
        return (self.seq.key(), self.target.key(), tuple(self.pending_collective_requests), self.phase.value)


class CcProtocol(ProtocolAdapter):
    name = "cc"

    def init_rank(self, world, ps) -> CcState:
        return CcState()

    # ---------------------------------------------------------- wrapper

    def _at_wrapper(self, world, ps) -> bool:
        if ps.mode != "ready":
            return False
        op = world.current_op(ps)
        return op is not None and op.instr.is_collective

    def owns(self, world, ps) -> bool:
        st: CcState = ps.proto
        if st.phase is not Phase.RUNNING:
            return True
        # parked in the pre-collective wait: all targets met, checkpoint pending
        return self._at_wrapper(world, ps) and not st.may_proceed()

    def choices(self, world, ps) -> List[Any]:
        st: CcState = ps.proto
        if st.phase is Phase.RUNNING:
            return [("proto", i) for i in world.distinct_inbox(ps.rank)]
        if st.phase is Phase.DRAINING:
            ok = any(world.request_completable(r) for r in st.pending_collective_requests)
            return [("drain",)] if ok else []
        return []

    def extra_choices(self, world, ps) -> List[Any]:
        st: CcState = ps.proto
        if not st.ckpt_pending or st.phase is not Phase.RUNNING or ps.mode == "coll":
            return []
        return [("proto", i) for i in world.distinct_inbox(ps.rank)]

    def step(self, world, ps, choice) -> None:
        if choice[0] == "drain":
            self.drain_pending(world, ps)
        else:
            self._receive(world, ps, choice[1])

    def _receive(self, world, ps, index: int) -> None:
        st: CcState = ps.proto
        was_parked = not st.may_proceed()
        msg = world.receive_protocol(ps.rank, index)
        st.target.merge(msg.ggid, msg.new_target)
        if was_parked and st.may_proceed():
            st.forced_resumes += 1

    def wait_for_new_targets(self, world, ps) -> bool:
        """Non-blocking form of the target wait.

        Consumes delivered updates while all targets are met; returns True
        when the rank may execute its next collective.
        """
        st: CcState = ps.proto
        while not st.may_proceed() and world.inbox[ps.rank]:
            self._receive(world, ps, 0)
        return st.may_proceed()

    def enter_wrapper(self, world, ps, op) -> bool:
        st: CcState = ps.proto
        if not self.wait_for_new_targets(world, ps):
            return False  # owns() parks the rank; unreachable through the scheduler
        g = op.ggid
        value = st.seq.increment(g)
        if st.ckpt_pending and value > st.target[g]:
            st.target.merge(g, value)
            for peer in g.members:
                if peer != ps.rank:
                    world.send_protocol(ps.rank, peer, TargetUpdateMsg(g, value, ps.rank))
        return True

    on_blocking_collective = enter_wrapper

    def leave_wrapper(self, world, ps, op, req) -> None:
        st: CcState = ps.proto
        if req is not None:
            self.on_nonblocking_init(st, req.id, op.ggid)
        self.wait_for_new_targets(world, ps)

    @staticmethod
    def on_nonblocking_init(st: CcState, req_id: str, g: Ggid) -> None:
        st.pending_collective_requests.append(req_id)
        st.pending_ggids[req_id] = g

    def on_comm_created(self, world, ps, g: Ggid) -> None:
        ps.proto.seq.ensure(g)

    def on_request_completion(self, world, ps, req_id: str) -> None:
        st: CcState = ps.proto
        if req_id not in st.pending_collective_requests:
            from ..sim import ProtocolInvariantError

            raise ProtocolInvariantError(f"rank {ps.rank} completed unrecorded request {req_id}")
        st.pending_collective_requests.remove(req_id)
        del st.pending_ggids[req_id]

    # ---------------------------------------------------------- checkpoint

    def on_checkpoint_request(self, world) -> None:
        states = [ps.proto for ps in world.ranks]
        known = set()
        for st in states:
            known.update(st.seq.known())
        targets = {g: max(states[r].seq[g] for r in g.members) for g in sorted(known)}
        for ps, st in zip(world.ranks, states):
            for g, v in targets.items():
                if ps.rank in g:
                    st.target.merge(g, v)
            st.target.ckpt_pending = True
        world.initial_targets = targets

    def detect_quiescence(self, world) -> bool:
        for ps in world.ranks:
            st: CcState = ps.proto
            if not st.ckpt_pending or ps.mode == "coll" or world.inbox[ps.rank]:
                return False
            if any(st.seq[g] != v for g, v in st.target.items()):
                return False
        return True

    def drain_pending(self, world, ps) -> None:
        """One pass of Test over every incomplete collective request."""
        st: CcState = ps.proto
        world.counters["drain_iterations"] += 1
        for req_id in list(st.pending_collective_requests):
            if world.test_request(ps, req_id, drain=True):
                self.on_request_completion(world, ps, req_id)

    def after_step(self, world) -> None:
        if not world.requested or world.snapshot_taken:
            return
        states = [ps.proto for ps in world.ranks]
        if all(st.phase is Phase.RUNNING for st in states):
            if not self.detect_quiescence(world):
                return
            self._begin_drain(world)
        for st in states:
            if st.phase is Phase.DRAINING and not st.pending_collective_requests:
                st.phase = Phase.SAFE
        if all(st.phase is Phase.SAFE for st in states):
            self._check_safe(world)
            world.take_snapshot()

    def _begin_drain(self, world) -> None:
        from ..sim import ProtocolInvariantError

        for ps in world.ranks:
            st: CcState = ps.proto
            for req_id in st.pending_collective_requests:
                req = world.requests.get(req_id)
                inst = world.instances.get(req.instance) if req is not None else None
                if inst is not None and not inst.all_entered:
                    missing = sorted(set(inst.members) - inst.entered)
                    raise ProtocolInvariantError(
                        f"drain started while ranks {missing} have not initiated the collective of request {req_id}"
                    )
            st.phase = Phase.DRAINING

    def _check_safe(self, world) -> None:
        from ..sim import ProtocolInvariantError

        for ps in world.ranks:
            st: CcState = ps.proto
            if ps.mode == "coll" or st.pending_collective_requests or not st.targets_met():
                raise ProtocolInvariantError(f"rank {ps.rank} declared safe in an unsafe state")
            if st.seq != ps.seq:
                raise ProtocolInvariantError(f"rank {ps.rank}: protocol SEQ {st.seq} != runtime count {ps.seq}")

    # ---------------------------------------------------------- reporting

    def dump(self, world, ps) -> Dict[str, Any]:
        st: CcState = ps.proto
        return {
            "phase": st.phase.value,
            "seq": {str(g): v for g, v in st.seq.items()},
            "target": {str(g): v for g, v in st.target.items()},
            "pending": list(st.pending_collective_requests),
        }

    def describe_block(self, world, ps) -> str:
        st: CcState = ps.proto
        if st.phase is Phase.DRAINING:
            return f"drain of requests {st.pending_collective_requests}"
        return "a target update (all targets met, checkpoint pending)"
