"""Deterministic discrete-event simulator of an MPI-like world.

The world is an explicit transition system.  Every scheduler tick applies one
atomic action: a rank step, background progress of a non-blocking collective,
or (during exploration) the checkpoint request itself.  ``run`` picks actions
with a seeded RNG; the oracle enumerates them all.

Semantics:

* blocking collectives are synchronizing: a member exits only after every
  member entered;
* point-to-point is rendezvous: a send completes when the receive is posted;
* a non-blocking collective progresses once all members initiated it, per
  the progress policy (eager: at the last initiation; lazy: inside a
  test/wait; randomized: a separately scheduled background action).
"""

from __future__ import annotations

import copy
import enum
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .core import (
    CommunicatorHandle,
    Ggid,
    GroupMembership,
    RequestHandle,
    RequestKind,
    RequestState,
    SeqTable,
    TargetUpdateMsg,
)
from .workload import WORLD, Op, Workload, expand

log = logging.getLogger(__name__)


class SimError(RuntimeError):
    pass


class ErroneousProgramError(SimError):
    """The workload broke MPI matching rules (e.g. mixed collective kinds)."""


class ProtocolInvariantError(SimError):
    """A protocol reached a state its design rules out."""


class UnsupportedFeatureError(SimError):
    pass


class RunawayError(SimError):
    def __init__(self, message: str, result: "SimResult") -> None:
        super().__init__(message)
        self.result = result


class DeadlockError(SimError):
    def __init__(self, report: "DeadlockReport", result: "SimResult") -> None:
        super().__init__(report.describe())
        self.report = report
        self.result = result


class ProgressPolicy(str, enum.Enum):
    EAGER = "eager"
    LAZY = "lazy"
    RANDOMIZED = "randomized"

    @classmethod
    def parse(cls, value: Union[str, "ProgressPolicy"]) -> "ProgressPolicy":
        if isinstance(value, ProgressPolicy):
            return value
        if value == "random":
            return cls.RANDOMIZED
        return cls(value)


@dataclass(frozen=True)
class SimConfig:
    world_size: int
    scheduler_seed: int = 0
    max_steps: int = 200_000
    progress_policy: ProgressPolicy = ProgressPolicy.EAGER

    def __post_init__(self) -> None:
        if self.world_size < 1:
            raise ValueError("world_size must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        object.__setattr__(self, "progress_policy", ProgressPolicy.parse(self.progress_policy))


# event actions
ENTER = "enter-collective"
EXIT = "exit-collective"
INIT = "init-nonblocking"
COMPLETE = "complete-request"
SEND = "send"
RECV = "recv-match"
PMSG_SEND = "protocol-msg-send"
PMSG_RECV = "protocol-msg-recv"
SNAPSHOT = "snapshot-taken"
REQUEST = "checkpoint-request"
ACTIONS = (ENTER, EXIT, INIT, COMPLETE, SEND, RECV, PMSG_SEND, PMSG_RECV, SNAPSHOT, REQUEST)


@dataclass(frozen=True)
class SimEvent:
    step: int
    tick: int
    rank: int
    action: str
    payload: Dict[str, Any] = field(default_factory=dict, hash=False)

    def to_record(self) -> Dict[str, Any]:
        return {"step": self.step, "tick": self.tick, "rank": self.rank, "action": self.action, "payload": self.payload}

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=False, separators=(",", ":"), default=_json_default)

    def __deepcopy__(self, memo):
        return self  # never mutated after emission

    @classmethod
    def from_record(cls, rec: Dict[str, Any]) -> "SimEvent":
        return cls(rec["step"], rec["tick"], rec["rank"], rec["action"], rec.get("payload", {}))


def _json_default(obj):
    if isinstance(obj, Ggid):
        return list(obj.members)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _canon_payload(payload: Dict[str, Any]) -> Dict[str, Any]:
    # stable field order and plain JSON types
    return json.loads(json.dumps(payload, sort_keys=True, default=_json_default))


def write_event_log(events: Iterable[SimEvent], path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_event_log(path) -> List[SimEvent]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SimEvent.from_record(json.loads(line)))
    return out


def format_event_log(events: Iterable[SimEvent]) -> str:
    return "".join(ev.to_json() + "\n" for ev in events)


# rank modes owned by the runtime
READY = "ready"
IN_COLL = "coll"
SENDING = "send"
RECEIVING = "recv"
DONE = "done"


@dataclass
class ProcessState:
    rank: int
    program_counter: int = 0
    mode: str = READY
    blocked_on: Optional[tuple] = None
    seq: SeqTable = field(default_factory=SeqTable)  # native per-ggid call counts
    comm_calls: Dict[str, int] = field(default_factory=dict)
    req_names: Dict[str, str] = field(default_factory=dict)
    entered: int = 0  # application collective calls entered or initiated
    proto: Any = None

    @property
    def pc(self) -> int:
        return self.program_counter

    @property
    def inside_collective(self) -> bool:
        return self.mode == IN_COLL

    def pending_requests(self, world: "World") -> List[RequestHandle]:
        return [world.requests[i] for i in self.req_names.values() if i in world.requests]

    def key(self) -> tuple:
        proto = self.proto.key() if self.proto is not None else None
        return (
            self.program_counter,
            self.mode,
            self.blocked_on,
            self.entered,
            tuple(sorted(self.comm_calls.items())),
            tuple(sorted(self.req_names.items())),
            proto,
        )


@dataclass
class Instance:
    key: tuple  # (space, comm, ordinal); space is "app" or "trial"
    comm: str
    ggid: Ggid
    kind: str
    blocking: bool
    members: Tuple[int, ...]
    entered: set = field(default_factory=set)
    exited: set = field(default_factory=set)
    complete: bool = False

    @property
    def protocol(self) -> bool:
        return self.key[0] != "app"

    @property
    def all_entered(self) -> bool:
        return len(self.entered) == len(self.members)

    def state_key(self) -> tuple:
        return (self.key, self.kind, tuple(sorted(self.entered)), tuple(sorted(self.exited)), self.complete)


class _Static:
    """Immutable run context, shared (not copied) between cloned worlds."""

    def __init__(self, workload: Workload, config: SimConfig, protocol) -> None:
        self.workload = workload
        self.config = config
        self.protocol = protocol
        self.ops: Tuple[Tuple[Op, ...], ...] = expand(workload)
        self.comm_members: Dict[str, Tuple[int, ...]] = {WORLD: tuple(range(workload.world_size))}
        for ops in self.ops:
            for op in ops:
                if op.opcode == "create_comm":
                    self.comm_members[op.instr.comm] = op.ggid.members

    def __deepcopy__(self, memo):
        return self


@dataclass
class BlockedRank:
    rank: int
    mode: str
    awaiting: str


@dataclass
class DeadlockReport:
    blocked: List[BlockedRank]
    crossings: List[str] = field(default_factory=list)
    tick: int = 0

    @property
    def erroneous(self) -> bool:
        return bool(self.crossings)

    def describe(self) -> str:
        parts = [f"rank {b.rank} ({b.mode}) awaits {b.awaiting}" for b in self.blocked]
        text = f"deadlock at tick {self.tick}: " + "; ".join(parts)
        if self.crossings:
            text += " | " + "; ".join(self.crossings)
        return text

    def to_record(self) -> Dict[str, Any]:
        return {
            "tick": self.tick,
            "blocked": [{"rank": b.rank, "mode": b.mode, "awaiting": b.awaiting} for b in self.blocked],
            "crossings": list(self.crossings),
        }


Action = tuple  # ("rank", r, choice) | ("progress", key) | ("request",)


class World:
    def __init__(self, workload: Workload, config: SimConfig, protocol, *, record_events: bool = True) -> None:
        if config.world_size != workload.world_size:
            raise ValueError(f"config world_size {config.world_size} != workload world_size {workload.world_size}")
        self.static = _Static(workload, config, protocol)
        protocol.check_workload(workload)
        self.ranks: List[ProcessState] = [ProcessState(r) for r in range(workload.world_size)]
        self.instances: Dict[tuple, Instance] = {}
        self.requests: Dict[str, RequestHandle] = {}
        self.inbox: List[List[TargetUpdateMsg]] = [[] for _ in range(workload.world_size)]
        self.events: Optional[List[SimEvent]] = [] if record_events else None
        self.tick = 0
        self.requested = False
        self.request_tick: Optional[int] = None
        self.cut_at_request: Optional[Tuple[int, ...]] = None
        self.snapshot_taken = False
        self.snapshot_tick: Optional[int] = None
        self.initial_targets: Optional[Dict[Ggid, int]] = None
        self.counters: Dict[str, Any] = {
            "protocol_messages_before_request": 0,
            "protocol_messages_after_request": 0,
            "extra_sync_events": 0,
            "drain_iterations": 0,
            "blocking_collective_calls": 0,
            "nonblocking_inits": 0,
            "p2p_matches": 0,
            "collectives_past_request": {},
        }
        for ps in self.ranks:
            ps.proto = protocol.init_rank(self, ps)
            if not self.ops(ps.rank):
                ps.mode = DONE

    # ------------------------------------------------------------------ basics

    @property
    def protocol(self):
        return self.static.protocol

    @property
    def config(self) -> SimConfig:
        return self.static.config

    @property
    def policy(self) -> ProgressPolicy:
        return self.static.config.progress_policy

    @property
    def world_size(self) -> int:
        return len(self.ranks)

    def ops(self, rank: int) -> Tuple[Op, ...]:
        return self.static.ops[rank]

    def current_op(self, ps: ProcessState) -> Optional[Op]:
        ops = self.static.ops[ps.rank]
        return ops[ps.program_counter] if ps.program_counter < len(ops) else None

    def communicator(self, rank: int, name: str) -> CommunicatorHandle:
        members = self.static.comm_members[name]
        if rank not in members:
            raise KeyError(f"rank {rank} is not in {name}")
        return CommunicatorHandle(f"{rank}:{name}", GroupMembership(members))

    def clone(self) -> "World":
        return copy.deepcopy(self)

    def emit(self, rank: int, action: str, **payload) -> None:
        if self.events is not None:
            self.events.append(SimEvent(len(self.events), self.tick, rank, action, _canon_payload(payload)))

    def state_key(self) -> tuple:
        return (
            tuple(ps.key() for ps in self.ranks),
            tuple(sorted(i.state_key() for i in self.instances.values())),
            tuple(sorted((k, r.state.value) for k, r in self.requests.items())),
            tuple(tuple(sorted(m.key() for m in box)) for box in self.inbox),
            self.requested,
            self.cut_at_request,
            self.snapshot_taken,
        )

    def all_done(self) -> bool:
        return all(ps.mode == DONE for ps in self.ranks)

    def advance(self, ps: ProcessState) -> None:
        ps.program_counter += 1
        ps.blocked_on = None
        ps.mode = DONE if ps.program_counter >= len(self.ops(ps.rank)) else READY

    # ------------------------------------------------------------------ collectives

    def _instance(self, ps: ProcessState, op: Op, space: str, blocking: bool, kind: str) -> Instance:
        comm = op.instr.comm
        calls = ps.comm_calls if space == "app" else ps.proto.trial_calls
        k = calls[comm] = calls.get(comm, 0) + 1
        key = (space, comm, k)
        inst = self.instances.get(key)
        if inst is None:
            inst = Instance(key, comm, op.ggid, kind, blocking, op.ggid.members)
            self.instances[key] = inst
        elif inst.kind != kind or inst.blocking != blocking:
            raise ErroneousProgramError(
                f"rank {ps.rank} calls {kind} as {comm} call #{k}, but other members called {inst.kind}"
            )
        if ps.rank in inst.entered:
            raise ErroneousProgramError(f"rank {ps.rank} entered {key} twice")
        inst.entered.add(ps.rank)
        return inst

    def enter_collective(self, ps: ProcessState, op: Op) -> None:
        inst = self._instance(ps, op, "app", True, op.instr.opcode)
        ps.seq.increment(op.ggid)
        ps.entered += 1
        ps.mode = IN_COLL
        ps.blocked_on = inst.key
        self.counters["blocking_collective_calls"] += 1
        self._count_past_request(op.ggid)
        self.emit(
            ps.rank, ENTER, comm=op.instr.comm, ggid=op.ggid, instance=_inst_id(inst.key),
            kind=inst.kind, pc=ps.program_counter, protocol=False,
        )

    def exit_collective(self, ps: ProcessState) -> Instance:
        inst = self.instances[ps.blocked_on]
        inst.exited.add(ps.rank)
        self.emit(ps.rank, EXIT, comm=inst.comm, ggid=inst.ggid, instance=_inst_id(inst.key), pc=ps.program_counter)
        if len(inst.exited) == len(inst.members):
            del self.instances[inst.key]
        return inst

    def init_collective(self, ps: ProcessState, op: Op, *, space: str = "app", kind: Optional[str] = None) -> RequestHandle:
        kind = kind or op.instr.kind
        inst = self._instance(ps, op, space, False, kind)
        req_id = f"{ps.rank}.{ps.program_counter}" + ("" if space == "app" else f".{space}")
        req = RequestHandle(req_id, RequestKind.COLLECTIVE, op.ggid, RequestState.PENDING, inst.key)
        self.requests[req_id] = req
        if space == "app":
            ps.seq.increment(op.ggid)
            ps.entered += 1
            ps.req_names[op.instr.requests[0]] = req_id
            self.counters["nonblocking_inits"] += 1
            self._count_past_request(op.ggid)
        self.emit(
            ps.rank, INIT, comm=op.instr.comm, ggid=op.ggid, instance=_inst_id(inst.key), kind=kind,
            pc=ps.program_counter, request=req_id, protocol=space != "app",
        )
        if self.policy is ProgressPolicy.EAGER and inst.all_entered:
            self._complete_instance(inst)
        return req

    def _complete_instance(self, inst: Instance) -> None:
        inst.complete = True
        for req in self.requests.values():
            if req.instance == inst.key and req.state is RequestState.PENDING:
                req.mark_complete()
        del self.instances[inst.key]

    def request_completable(self, req_id: str, *, drives_progress: bool = True) -> bool:
        """True when a test on this request would report completion now."""
        req = self.requests.get(req_id)
        if req is None or req.state is RequestState.COMPLETE:
            return True
        if drives_progress and self.policy is ProgressPolicy.LAZY:
            inst = self.instances.get(req.instance)
            return inst is not None and inst.all_entered
        return False

    def test_request(self, ps: ProcessState, req_id: str, **payload) -> bool:
        """MPI_Test: on success the request becomes null (a null request tests true)."""
        req = self.requests.get(req_id)
        if req is None:
            return True
        if req.state is RequestState.PENDING and self.policy is ProgressPolicy.LAZY:
            inst = self.instances.get(req.instance)
            if inst is not None and inst.all_entered:
                self._complete_instance(inst)
        if req.state is not RequestState.COMPLETE:
            return False
        req.release()
        del self.requests[req_id]
        self.emit(ps.rank, COMPLETE, request=req_id, instance=_inst_id(req.instance), ggid=req.ggid, **payload)
        return True

    def progress_choices(self) -> List[Action]:
        if self.policy is not ProgressPolicy.RANDOMIZED:
            return []
        return [("progress", k) for k, inst in sorted(self.instances.items()) if not inst.blocking and inst.all_entered]

    def _count_past_request(self, g: Ggid) -> None:
        if self.requested:
            past = self.counters["collectives_past_request"]
            past[str(g)] = past.get(str(g), 0) + 1

    # ------------------------------------------------------------------ protocol channel

    def send_protocol(self, src: int, dst: int, msg: TargetUpdateMsg) -> None:
        self.inbox[dst].append(msg)
        which = "protocol_messages_after_request" if self.requested else "protocol_messages_before_request"
        self.counters[which] += 1
        self.emit(src, PMSG_SEND, to=dst, ggid=msg.ggid, new_target=msg.new_target, wire=msg.encode().hex())

    def receive_protocol(self, rank: int, index: int) -> TargetUpdateMsg:
        msg = self.inbox[rank].pop(index)
        self.emit(rank, PMSG_RECV, sender=msg.sender, ggid=msg.ggid, new_target=msg.new_target)
        return msg

    def distinct_inbox(self, rank: int) -> List[int]:
        """Indices of the first copy of each distinct message in *rank*'s inbox."""
        seen, out = set(), []
        for i, m in enumerate(self.inbox[rank]):
            if m.key() not in seen:
                seen.add(m.key())
                out.append(i)
        return out

    # ------------------------------------------------------------------ p2p

    def _p2p_candidates(self, ps: ProcessState, op: Op) -> List[int]:
        ins = op.instr
        out = []
        if ins.opcode == "send":
            peer = self.ranks[ins.peer]
            b = peer.blocked_on
            if peer.mode == RECEIVING and b[2] == ins.tag and b[3] == ins.comm and b[1] in (None, ps.rank):
                out.append(ins.peer)
        else:
            for other in self.ranks:
                b = other.blocked_on
                if (
                    other.mode == SENDING
                    and b[1] == ps.rank
                    and b[2] == ins.tag
                    and b[3] == ins.comm
                    and (ins.peer is None or ins.peer == other.rank)
                ):
                    out.append(other.rank)
        return out

    def _p2p(self, ps: ProcessState, op: Op, partner: Optional[int]) -> None:
        ins = op.instr
        if partner is None:
            ps.mode = SENDING if ins.opcode == "send" else RECEIVING
            ps.blocked_on = (ins.opcode, ins.peer, ins.tag, ins.comm)
            return
        other = self.ranks[partner]
        sender, receiver = (ps, other) if ins.opcode == "send" else (other, ps)
        self.counters["p2p_matches"] += 1
        self.emit(sender.rank, SEND, peer=receiver.rank, tag=ins.tag, comm=ins.comm, pc=sender.program_counter)
        self.emit(receiver.rank, RECV, peer=sender.rank, tag=ins.tag, comm=ins.comm, pc=receiver.program_counter)
        self.advance(sender)
        self.advance(receiver)

    # ------------------------------------------------------------------ scheduling

    def rank_choices(self, ps: ProcessState) -> List[Any]:
        proto = self.protocol
        if proto.owns(self, ps):
            return proto.choices(self, ps)
        mode = ps.mode
        out = self._runtime_choices(ps)
        return out if out else proto.extra_choices(self, ps)

    def _runtime_choices(self, ps: ProcessState) -> List[Any]:
        mode = ps.mode
        if mode == IN_COLL:
            return [None] if self.instances[ps.blocked_on].all_entered else []
        if mode != READY:
            return []
        op = self.current_op(ps)
        name = op.opcode
        if name in ("wait", "waitall"):
            ok = all(self.request_completable(ps.req_names[q]) for q in op.instr.requests)
            return [None] if ok else []
        if name in ("send", "recv"):
            cands = self._p2p_candidates(ps, op)
            return cands if cands else [None]
        return [None]

    def enabled_actions(self) -> List[Action]:
        if self.snapshot_taken:
            return []
        acts: List[Action] = []
        for ps in self.ranks:
            acts.extend(("rank", ps.rank, c) for c in self.rank_choices(ps))
        acts.extend(self.progress_choices())
        return acts

    def apply(self, action: Action) -> None:
        if action[0] == "request":
            self.request_checkpoint()
            return
        self.tick += 1
        if action[0] == "progress":
            self._complete_instance(self.instances[action[1]])
        else:
            ps = self.ranks[action[1]]
            choice = action[2]
            if self.protocol.owns(self, ps) or (isinstance(choice, tuple) and choice[0] == "proto"):
                self.protocol.step(self, ps, choice)
            else:
                self._runtime_step(ps, action[2])
        self.protocol.after_step(self)

    def _runtime_step(self, ps: ProcessState, choice) -> None:
        if ps.mode == IN_COLL:
            self.exit_collective(ps)
            op = self.current_op(ps)
            self.protocol.leave_wrapper(self, ps, op, None)
            self.advance(ps)
            return
        op = self.current_op(ps)
        name = op.opcode
        if name == "compute":
            self.advance(ps)
        elif name == "create_comm":
            self.protocol.on_comm_created(self, ps, op.ggid)
            ps.seq.ensure(op.ggid)
            self.advance(ps)
        elif op.instr.is_blocking_collective:
            if self.protocol.enter_wrapper(self, ps, op):
                self.enter_collective(ps, op)
        elif name == "icollective":
            if self.protocol.enter_wrapper(self, ps, op):
                req = self.init_collective(ps, op)
                self.protocol.leave_wrapper(self, ps, op, req)
                self.advance(ps)
        elif name == "test":
            req_id = ps.req_names[op.instr.requests[0]]
            if self.test_request(ps, req_id):
                self.protocol.on_request_completion(self, ps, req_id)
            self.advance(ps)
        elif name in ("wait", "waitall"):
            for q in op.instr.requests:
                req_id = ps.req_names[q]
                live = req_id in self.requests
                if not self.test_request(ps, req_id):
                    raise SimError(f"rank {ps.rank} waited on incomplete request {req_id}")
                if live:
                    self.protocol.on_request_completion(self, ps, req_id)
            self.advance(ps)
        elif name in ("send", "recv"):
            self._p2p(ps, op, choice)
        else:  # pragma: no cover - parser rejects unknown opcodes
            raise SimError(f"unknown opcode {name}")

    # ------------------------------------------------------------------ checkpointing

    def request_checkpoint(self) -> None:
        if self.requested:
            raise SimError("checkpoint already requested")
        self.requested = True
        self.request_tick = self.tick
        self.cut_at_request = tuple(ps.entered for ps in self.ranks)
        for ps in self.ranks:
            self.emit(ps.rank, REQUEST, pc=ps.program_counter, entered=ps.entered)
        self.protocol.on_checkpoint_request(self)
        self.protocol.after_step(self)

    def take_snapshot(self) -> None:
        self.snapshot_taken = True
        self.snapshot_tick = self.tick
        for ps in self.ranks:
            self.emit(
                ps.rank, SNAPSHOT, pc=ps.program_counter, mode=ps.mode, entered=ps.entered,
                inside=ps.inside_collective, state=self.protocol.dump(self, ps),
            )

    # ------------------------------------------------------------------ diagnostics

    def describe_block(self, ps: ProcessState) -> str:
        if ps.mode == IN_COLL:
            inst = self.instances[ps.blocked_on]
            missing = sorted(set(inst.members) - inst.entered)
            return f"collective {_inst_id(inst.key)} (missing ranks {missing})"
        if ps.mode == SENDING:
            return f"receive posted by rank {ps.blocked_on[1]} for tag {ps.blocked_on[2]} on {ps.blocked_on[3]}"
        if ps.mode == RECEIVING:
            src = "any rank" if ps.blocked_on[1] is None else f"rank {ps.blocked_on[1]}"
            return f"send from {src} with tag {ps.blocked_on[2]} on {ps.blocked_on[3]}"
        if ps.mode == READY:
            op = self.current_op(ps)
            if op.opcode in ("wait", "waitall"):
                reqs = [ps.req_names[q] for q in op.instr.requests]
                return f"completion of request(s) {reqs}"
        return self.protocol.describe_block(self, ps)

    def deadlock_report(self) -> DeadlockReport:
        blocked = [BlockedRank(ps.rank, ps.mode, self.describe_block(ps)) for ps in self.ranks if ps.mode != DONE]
        return DeadlockReport(blocked, self._crossings(), self.tick)

    def _crossings(self) -> List[str]:
        out = []
        for ps in self.ranks:
            if ps.mode not in (SENDING, RECEIVING):
                continue
            peer = ps.blocked_on[1]
            candidates = [self.ranks[peer]] if peer is not None else self.ranks
            for other in candidates:
                if other.mode != IN_COLL:
                    continue
                inst = self.instances[other.blocked_on]
                if ps.rank in inst.members and ps.rank not in inst.entered:
                    out.append(
                        f"p2p-crosses-collective: rank {ps.rank} blocks in {ps.mode} while rank {other.rank} "
                        f"waits for it inside {_inst_id(inst.key)}"
                    )
        return out


def _inst_id(key: tuple) -> str:
    space, comm, k = key
    return f"{comm}#{k}" if space == "app" else f"{space}:{comm}#{k}"


# ---------------------------------------------------------------------- results


@dataclass
class SimResult:
    status: str  # completed | snapshot
    events: List[SimEvent]
    final_states: List[ProcessState]
    metrics: "Metrics"
    verdict: Any = None  # oracle SnapshotVerdict when a snapshot was taken
    world: Optional[World] = None
    initial_targets: Optional[Dict[Ggid, int]] = None

    @property
    def event_log(self) -> str:
        return format_event_log(self.events)


RequestAt = Union[None, int, Callable[[World], bool]]


def _due(world: World, request_at: RequestAt) -> bool:
    if request_at is None or world.requested:
        return False
    if callable(request_at):
        return bool(request_at(world))
    return world.tick >= request_at


def run(
    config: SimConfig,
    workload: Workload,
    protocol="none",
    checkpoint_request_at: RequestAt = None,
    *,
    check: bool = True,
) -> SimResult:
    """Run *workload* to completion or to a snapshot.

    ``checkpoint_request_at`` is a scheduler tick (the request is issued
    before the tick's action), a predicate over the world, or None.  A tick
    beyond the end of the run is honoured at the end.  When a snapshot is
    taken and *check* is true, the oracle verdict is attached.
    """
    from .metrics import Metrics
    from .protocols import get_protocol

    proto = get_protocol(protocol)
    world = World(workload, config, proto)
    rng = random.Random(config.scheduler_seed)

    def result(status: str) -> SimResult:
        res = SimResult(
            status, world.events, world.ranks, Metrics.from_world(world), world=world,
            initial_targets=world.initial_targets,
        )
        if world.snapshot_taken and check:
            from .oracle import build_graph, check_snapshot, cut_from_events

            res.verdict = check_snapshot(build_graph(world.events), cut_from_events(world.events))
        return res

    while True:
        if _due(world, checkpoint_request_at):
            world.request_checkpoint()
        if world.snapshot_taken:
            return result("snapshot")
        acts = world.enabled_actions()
        if not acts:
            if world.all_done():
                if checkpoint_request_at is not None and not world.requested and not callable(checkpoint_request_at):
                    world.request_checkpoint()
                    continue
                return result("completed")
            report = world.deadlock_report()
            log.info("%s", report.describe())
            raise DeadlockError(report, result("deadlock"))
        if world.tick >= config.max_steps:
            raise RunawayError(f"exceeded max_steps={config.max_steps}", result("runaway"))
        world.apply(acts[rng.randrange(len(acts))] if len(acts) > 1 else acts[0])
