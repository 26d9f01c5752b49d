"""Per-rank workload programs: text format, validation and random generation.

Text format, one instruction per line::

    # comment
    world 3
    rank 0: create_comm pair 0 1
    rank 0: barrier pair x2
    rank 0: icollective world r0 ibcast
    rank 0: send 1 7 pair
    rank 1: recv any 7 pair
    rank 0: wait r0
    rank 2: compute 5

``world`` is optional (inferred from the highest rank mentioned).  Every rank
implicitly holds the ``world`` communicator.  Communicator names are global:
all members must create a name with the same member list.  Peers are world
ranks.  ``xN`` repeats blocking collectives and point-to-point calls.
"""

from __future__ import annotations

import dataclasses
import graphlib
import random
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .core import Ggid, PROTOCOL_COMM, compute_ggid

BLOCKING_KINDS = ("barrier", "bcast", "reduce", "alltoall")
NONBLOCKING_KINDS = ("ibarrier", "ibcast", "ireduce", "ialltoall")
OPCODES = ("create_comm",) + BLOCKING_KINDS + ("icollective", "test", "wait", "waitall", "send", "recv", "compute")
WORLD = "world"

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")
_LINE = re.compile(r"^rank\s+(\S+)\s*:\s*(.*)$")


class WorkloadParseError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    opcode: str
    comm: Optional[str] = None
    members: Tuple[int, ...] = ()
    peer: Optional[int] = None  # None on recv means any source
    tag: int = 0
    requests: Tuple[str, ...] = ()
    kind: Optional[str] = None
    repeat: int = 1

    @property
    def is_blocking_collective(self) -> bool:
        return self.opcode in BLOCKING_KINDS

    @property
    def is_collective(self) -> bool:
        return self.opcode in BLOCKING_KINDS or self.opcode == "icollective"

    @property
    def collective_kind(self) -> Optional[str]:
        if self.opcode in BLOCKING_KINDS:
            return self.opcode
        if self.opcode == "icollective":
            return self.kind
        return None

    def to_text(self) -> str:
        op = self.opcode
        rep = f" x{self.repeat}" if self.repeat != 1 else ""
        if op == "create_comm":
            return f"create_comm {self.comm} " + " ".join(map(str, self.members))
        if op in BLOCKING_KINDS:
            return f"{op} {self.comm}{rep}"
        if op == "icollective":
            return f"icollective {self.comm} {self.requests[0]} {self.kind}"
        if op in ("test", "wait", "waitall"):
            return f"{op} " + " ".join(self.requests)
        if op == "send":
            return f"send {self.peer} {self.tag} {self.comm}{rep}"
        if op == "recv":
            src = "any" if self.peer is None else str(self.peer)
            return f"recv {src} {self.tag} {self.comm}{rep}"
        if op == "compute":
            return f"compute {self.repeat}"
        raise ValueError(f"unknown opcode {op!r}")


@dataclass(frozen=True)
class WorkloadProgram:
    rank: int
    instructions: Tuple[Instruction, ...] = ()


@dataclass(frozen=True)
class Workload:
    world_size: int
    programs: Tuple[WorkloadProgram, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.world_size < 1:
            raise ValueError("world_size must be >= 1")
        if len(self.programs) != self.world_size:
            raise ValueError("need exactly one program per rank")
        for r, p in enumerate(self.programs):
            if p.rank != r:
                raise ValueError(f"program {r} is labelled rank {p.rank}")

    def instruction_count(self) -> int:
        return sum(len(p.instructions) for p in self.programs)

    @property
    def has_nonblocking(self) -> bool:
        return any(i.opcode == "icollective" for p in self.programs for i in p.instructions)

    def blocking_collective_calls(self) -> int:
        return sum(i.repeat for p in self.programs for i in p.instructions if i.is_blocking_collective)


# --------------------------------------------------------------------------
# parsing / serialization


def _int(tok: str, line: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise WorkloadParseError(line, f"expected integer {what}, got {tok!r}") from None


def _repeat(tokens: List[str], line: int) -> Tuple[List[str], int]:
    if tokens and re.fullmatch(r"x\d+", tokens[-1]):
        n = int(tokens[-1][1:])
        if n < 1:
            raise WorkloadParseError(line, "repeat count must be >= 1")
        return tokens[:-1], n
    return tokens, 1


def _name(tok: str, line: int, what: str) -> str:
    if not _NAME.match(tok):
        raise WorkloadParseError(line, f"invalid {what} name {tok!r}")
    return tok


def _parse_instruction(text: str, line: int) -> Instruction:
    tokens = text.split()
    if not tokens:
        raise WorkloadParseError(line, "missing opcode")
    op, args = tokens[0], tokens[1:]
    if op not in OPCODES:
        raise WorkloadParseError(line, f"unknown opcode {op!r}")
    if op == "create_comm":
        if len(args) < 2:
            raise WorkloadParseError(line, "create_comm needs a name and at least one member")
        name = _name(args[0], line, "communicator")
        if name in (WORLD, PROTOCOL_COMM):
            raise WorkloadParseError(line, f"communicator name {name!r} is reserved")
        members = tuple(_int(t, line, "member rank") for t in args[1:])
        if len(set(members)) != len(members):
            raise WorkloadParseError(line, "duplicate member in create_comm")
        return Instruction(op, comm=name, members=members)
    if op in BLOCKING_KINDS:
        args, rep = _repeat(args, line)
        if len(args) != 1:
            raise WorkloadParseError(line, f"{op} takes one communicator operand")
        return Instruction(op, comm=_name(args[0], line, "communicator"), repeat=rep)
    if op == "icollective":
        if len(args) not in (2, 3):
            raise WorkloadParseError(line, "icollective takes: <comm> <request> [kind]")
        kind = args[2] if len(args) == 3 else "ibarrier"
        if kind not in NONBLOCKING_KINDS:
            raise WorkloadParseError(line, f"unknown non-blocking kind {kind!r}")
        return Instruction(
            op, comm=_name(args[0], line, "communicator"), requests=(_name(args[1], line, "request"),), kind=kind
        )
    if op in ("test", "wait"):
        if len(args) != 1:
            raise WorkloadParseError(line, f"{op} takes one request operand")
        return Instruction(op, requests=(_name(args[0], line, "request"),))
    if op == "waitall":
        if not args:
            raise WorkloadParseError(line, "waitall needs at least one request")
        reqs = tuple(_name(a, line, "request") for a in args)
        if len(set(reqs)) != len(reqs):
            raise WorkloadParseError(line, "duplicate request in waitall")
        return Instruction(op, requests=reqs)
    if op in ("send", "recv"):
        args, rep = _repeat(args, line)
        if len(args) not in (2, 3):
            raise WorkloadParseError(line, f"{op} takes: <peer> <tag> [comm]")
        if op == "recv" and args[0] == "any":
            peer = None
        else:
            peer = _int(args[0], line, "peer rank")
        tag = _int(args[1], line, "tag")
        if tag < 0:
            raise WorkloadParseError(line, "tags must be non-negative")
        comm = _name(args[2], line, "communicator") if len(args) == 3 else WORLD
        return Instruction(op, comm=comm, peer=peer, tag=tag, repeat=rep)
    # compute
    if len(args) > 1:
        raise WorkloadParseError(line, "compute takes an optional unit count")
    n = _int(args[0], line, "unit count") if args else 1
    if n < 1:
        raise WorkloadParseError(line, "compute count must be >= 1")
    return Instruction(op, repeat=n)


def parse_workload(text: str, name: str = "") -> Workload:
    """Parse workload text.  Raises WorkloadParseError with a line number."""
    world: Optional[int] = None
    per_rank: Dict[int, List[Tuple[int, Instruction]]] = {}
    highest = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("world"):
            parts = body.split()
            if len(parts) != 2 or parts[0] != "world":
                raise WorkloadParseError(lineno, "expected: world <size>")
            if world is not None:
                raise WorkloadParseError(lineno, "duplicate world directive")
            if per_rank:
                raise WorkloadParseError(lineno, "world directive must precede rank lines")
            world = _int(parts[1], lineno, "world size")
            if world < 1:
                raise WorkloadParseError(lineno, "world size must be >= 1")
            continue
        m = _LINE.match(body)
        if not m:
            raise WorkloadParseError(lineno, f"expected 'rank <r>: <opcode> ...', got {body!r}")
        r = _int(m.group(1), lineno, "rank")
        if r < 0 or (world is not None and r >= world):
            raise WorkloadParseError(lineno, f"rank {r} out of range")
        instr = _parse_instruction(m.group(2), lineno)
        highest = max([highest, r] + list(instr.members) + ([instr.peer] if instr.peer is not None else []))
        per_rank.setdefault(r, []).append((lineno, instr))
    if world is None:
        if not per_rank:
            raise WorkloadParseError(1, "empty workload")
        world = highest + 1
    _check_references(world, per_rank)
    programs = tuple(
        WorkloadProgram(r, tuple(i for _, i in per_rank.get(r, []))) for r in range(world)
    )
    return Workload(world, programs, name=name)


def _check_references(world: int, per_rank: Dict[int, List[Tuple[int, Instruction]]]) -> None:
    comm_members: Dict[str, Tuple[Tuple[int, ...], int]] = {}
    for r in sorted(per_rank):
        comms = {WORLD: tuple(range(world))}
        live: Dict[str, bool] = {}  # request name -> needs a wait before reuse
        for lineno, ins in per_rank[r]:
            if ins.opcode == "create_comm":
                if any(m < 0 or m >= world for m in ins.members):
                    raise WorkloadParseError(lineno, f"member rank out of range in {ins.comm}")
                if r not in ins.members:
                    raise WorkloadParseError(lineno, f"rank {r} creates {ins.comm} without being a member")
                if ins.comm in comms:
                    raise WorkloadParseError(lineno, f"communicator {ins.comm} created twice")
                canon = tuple(sorted(ins.members))
                seen = comm_members.get(ins.comm)
                if seen is not None and seen[0] != canon:
                    raise WorkloadParseError(
                        lineno, f"communicator {ins.comm} has members {canon}, but line {seen[1]} says {seen[0]}"
                    )
                comm_members.setdefault(ins.comm, (canon, lineno))
                comms[ins.comm] = canon
                continue
            if ins.comm is not None and ins.comm not in comms:
                raise WorkloadParseError(lineno, f"undefined communicator {ins.comm!r}")
            if ins.opcode in ("send", "recv"):
                if ins.peer is not None:
                    if ins.peer < 0 or ins.peer >= world:
                        raise WorkloadParseError(lineno, f"peer {ins.peer} out of range")
                    if ins.peer not in comms[ins.comm]:
                        raise WorkloadParseError(lineno, f"peer {ins.peer} is not in {ins.comm}")
                    if ins.peer == r:
                        raise WorkloadParseError(lineno, "send/recv to self would block forever")
            if ins.opcode == "icollective":
                req = ins.requests[0]
                if live.get(req):
                    raise WorkloadParseError(lineno, f"request {req!r} reused before wait")
                live[req] = True
            elif ins.opcode in ("test", "wait", "waitall"):
                for req in ins.requests:
                    if req not in live:
                        raise WorkloadParseError(lineno, f"undefined request {req!r}")
                    if ins.opcode != "test":
                        live[req] = False


def serialize_workload(workload: Workload) -> str:
    lines = [f"world {workload.world_size}"]
    for prog in workload.programs:
        lines.extend(f"rank {prog.rank}: {ins.to_text()}" for ins in prog.instructions)
    return "\n".join(lines) + "\n"


def load_workload(path) -> Workload:
    from pathlib import Path

    p = Path(path)
    return parse_workload(p.read_text(), name=p.stem)


# --------------------------------------------------------------------------
# static resolution


@dataclass(frozen=True)
class Op:
    """One unit of a rank's expanded program (repeats unrolled)."""

    rank: int
    pc: int
    instr: Instruction
    ggid: Optional[Ggid] = None  # for collectives, create_comm and p2p

    @property
    def opcode(self) -> str:
        return self.instr.opcode


def expand(workload: Workload) -> Tuple[Tuple[Op, ...], ...]:
    """Unroll repeats and resolve communicator names to ggids, per rank."""
    out = []
    world_ggid = compute_ggid(range(workload.world_size))
    for prog in workload.programs:
        comms: Dict[str, Ggid] = {WORLD: world_ggid}
        ops: List[Op] = []
        for ins in prog.instructions:
            if ins.opcode == "create_comm":
                comms[ins.comm] = compute_ggid(ins.members)
                ops.append(Op(prog.rank, len(ops), ins, comms[ins.comm]))
                continue
            unit = dataclasses.replace(ins, repeat=1) if ins.repeat != 1 else ins
            g = comms[ins.comm] if ins.comm is not None else None
            for _ in range(ins.repeat):
                ops.append(Op(prog.rank, len(ops), unit, g))
        out.append(tuple(ops))
    return tuple(out)


def collective_calls(ops: Sequence[Op]) -> List[Op]:
    return [op for op in ops if op.instr.is_collective]


# --------------------------------------------------------------------------
# correctness checking


@dataclass
class CorrectnessReport:
    reasons: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    exhaustive: Optional[str] = None  # summary when the native state space was searched

    @property
    def correct(self) -> bool:
        return not self.reasons

    @property
    def verdict(self) -> str:
        return "correct" if self.correct else "erroneous"


def _p2p_pairs(expanded) -> Tuple[List[Tuple[Op, Op]], List[str], bool]:
    """Statically match sends to receives in order per (src, dst, tag, comm)."""
    sends: Dict[tuple, List[Op]] = {}
    recvs: Dict[tuple, List[Op]] = {}
    wildcard = False
    for ops in expanded:
        for op in ops:
            ins = op.instr
            if ins.opcode == "send":
                sends.setdefault((op.rank, ins.peer, ins.tag, ins.comm), []).append(op)
            elif ins.opcode == "recv":
                if ins.peer is None:
                    wildcard = True
                    continue
                recvs.setdefault((ins.peer, op.rank, ins.tag, ins.comm), []).append(op)
    pairs: List[Tuple[Op, Op]] = []
    problems: List[str] = []
    if wildcard:
        return pairs, problems, True
    for key in sorted(set(sends) | set(recvs)):
        s, r = sends.get(key, []), recvs.get(key, [])
        if len(s) != len(r):
            src, dst, tag, comm = key
            problems.append(
                f"p2p count mismatch: {len(s)} send(s) {src}->{dst} tag {tag} on {comm}, {len(r)} matching recv(s)"
            )
        pairs.extend(zip(s, r))
    return pairs, problems, False


def _fig5_crossings(expanded, pairs) -> List[str]:
    found = []
    for snd, rcv in pairs:
        a, b = snd.rank, rcv.rank
        comms = {}
        for op in collective_calls(expanded[a]) + collective_calls(expanded[b]):
            if op.instr.is_blocking_collective and a in op.ggid and b in op.ggid:
                comms[op.instr.comm] = op.ggid
        for comm in sorted(comms):
            before_send = sum(
                1 for op in expanded[a][: snd.pc] if op.instr.is_blocking_collective and op.instr.comm == comm
            )
            before_recv = sum(
                1 for op in expanded[b][: rcv.pc] if op.instr.is_blocking_collective and op.instr.comm == comm
            )
            if before_send != before_recv:
                found.append(
                    f"fig5 crossing: send {a}->{b} (tag {snd.instr.tag}) follows {before_send} '{comm}' "
                    f"collective(s) on the sender but its recv follows {before_recv} on the receiver"
                )
    return found


def happens_before_cycle(expanded, pairs) -> Optional[List[str]]:
    """Return a cycle of synchronization points, or None.

    Vertices are program points and synchronization nodes: blocking
    collective instances and rendezvous pairs (entered by all parties before
    any leaves), non-blocking instances (initiation feeds the node, waits
    depend on it).  A cycle means the program deadlocks when collectives are
    synchronizing.
    """
    preds: Dict[tuple, set] = {}

    def edge(u, v):
        preds.setdefault(v, set()).add(u)
        preds.setdefault(u, set())

    pair_of = {}
    for i, (s, r) in enumerate(pairs):
        pair_of[(s.rank, s.pc)] = ("p2p", i)
        pair_of[(r.rank, r.pc)] = ("p2p", i)
    for ops in expanded:
        per_comm: Dict[str, int] = {}
        req_node: Dict[str, tuple] = {}
        for op in ops:
            here, nxt = ("pt", op.rank, op.pc), ("pt", op.rank, op.pc + 1)
            ins = op.instr
            if ins.is_collective:
                k = per_comm[ins.comm] = per_comm.get(ins.comm, 0) + 1
                node = ("coll", ins.comm, k)
                edge(here, node)
                if ins.is_blocking_collective:
                    edge(node, nxt)
                else:
                    req_node[ins.requests[0]] = node
                    edge(here, nxt)
            elif (op.rank, op.pc) in pair_of:
                node = pair_of[(op.rank, op.pc)]
                edge(here, node)
                edge(node, nxt)
            elif ins.opcode in ("wait", "waitall"):
                edge(here, nxt)
                for req in ins.requests:
                    if req in req_node:
                        edge(req_node[req], nxt)
            else:
                edge(here, nxt)
    try:
        tuple(graphlib.TopologicalSorter(preds).static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        return [_describe(v) for v in cycle]
    return None


def _describe(v) -> str:
    if v[0] == "pt":
        return f"rank {v[1]} pc {v[2]}"
    if v[0] == "coll":
        return f"{v[1]}#{v[2]}"
    return f"p2p pair {v[1]}"


def _collective_mismatches(expanded) -> List[str]:
    seqs: Dict[str, Dict[int, List[str]]] = {}
    members: Dict[str, Ggid] = {}
    for ops in expanded:
        for op in ops:
            if op.instr.is_collective:
                members[op.instr.comm] = op.ggid
                seqs.setdefault(op.instr.comm, {}).setdefault(op.rank, []).append(op.instr.collective_kind)
    problems = []
    for comm in sorted(seqs):
        calls = {r: seqs[comm].get(r, []) for r in members[comm].members}
        counts = {r: len(v) for r, v in calls.items()}
        if len(set(counts.values())) > 1:
            problems.append(f"collective count mismatch on {comm}: " + ", ".join(f"rank {r}: {n}" for r, n in counts.items()))
            continue
        kinds = list(calls.values())
        for i, column in enumerate(zip(*kinds)):
            if len(set(column)) > 1:
                problems.append(f"collective kind mismatch on {comm} call #{i + 1}: {sorted(set(column))}")
                break
    return problems


def _bracket_warnings(expanded, pairs) -> List[str]:
    """Flag p2p pairs whose endpoints are not fenced by the same collective.

    The collective-clock protocol stops ranks only at collective call sites;
    a send/recv pair whose endpoints last synchronized on different
    collectives can leave one side parked while the other waits.
    """
    warnings = []
    for snd, rcv in pairs:
        last = []
        for op in (snd, rcv):
            prior = [p for p in expanded[op.rank][: op.pc] if p.instr.is_collective or p.opcode in ("wait", "waitall")]
            last.append(_fence_id(expanded[op.rank], prior[-1]) if prior else None)
        if last[0] != last[1]:
            warnings.append(
                f"p2p {snd.rank}->{rcv.rank} (tag {snd.instr.tag}) is not fenced by a common collective; "
                "the collective-clock protocol may stall on it"
            )
    return warnings


def _fence_id(ops, op):
    if op.instr.is_blocking_collective:
        k = sum(1 for p in ops[: op.pc + 1] if p.instr.is_collective and p.instr.comm == op.instr.comm)
        return (op.instr.comm, k)
    return ("rank", op.rank, op.pc)


def validate_correctness(workload: Workload, *, exhaustive: Optional[bool] = None, max_states: int = 50_000) -> CorrectnessReport:
    """Classify a workload as correct or erroneous.

    Static checks: per-communicator call counts and kinds, statically matched
    p2p counts, send/recv pairs crossing a blocking collective that contains
    both endpoints, and happens-before cycles.  For small workloads (or when
    *exhaustive* is true) the native state space is also searched for
    deadlocks.
    """
    report = CorrectnessReport()
    expanded = expand(workload)
    report.reasons.extend(_collective_mismatches(expanded))
    pairs, problems, wildcard = _p2p_pairs(expanded)
    report.reasons.extend(problems)
    if not wildcard:
        report.reasons.extend(_fig5_crossings(expanded, pairs))
        if not report.reasons:
            cycle = happens_before_cycle(expanded, pairs)
            if cycle:
                report.reasons.append("happens-before cycle: " + " -> ".join(cycle))
        report.warnings.extend(_bracket_warnings(expanded, pairs))
    else:
        report.warnings.append("wildcard receives: p2p matching checked only by exhaustive search")
    small = workload.world_size <= 4 and sum(len(o) for o in expanded) <= 24
    if exhaustive or (exhaustive is None and small):
        from .oracle import Bounds, explore_interleavings

        verdict = explore_interleavings(
            workload, "none", request="never", bounds=Bounds(max_states=max_states, max_instructions=10**9)
        )
        report.exhaustive = verdict.summary()
        if verdict.deadlocks:
            if not report.reasons:
                report.reasons.append("deadlock reachable natively: " + verdict.deadlocks[0].describe())
        if verdict.errors:
            report.reasons.append("erroneous program: " + verdict.errors[0])
    return report


# --------------------------------------------------------------------------
# random generation


def generate_random_workload(
    seed: int,
    world_size: int,
    n_collectives: int,
    n_p2p: int = 0,
    nonblocking_fraction: float = 0.0,
    *,
    max_groups: int = 4,
    compute_prob: float = 0.3,
) -> Workload:
    """Generate a correct workload from a seeded global schedule.

    Collectives are drawn in one global order and projected onto their
    members.  Each non-blocking initiation is waited for (or tested, then
    waited for) at a later global position chosen per member.  A p2p pair is
    placed either at program start or directly after a blocking collective
    whose group contains both endpoints, before either endpoint does
    anything else.
    """
    if world_size < 1:
        raise GenerationError("world_size must be >= 1")
    if n_collectives < 0 or n_p2p < 0:
        raise GenerationError("counts must be non-negative")
    if not 0.0 <= nonblocking_fraction <= 1.0:
        raise GenerationError("nonblocking_fraction must lie in [0, 1]")
    if n_p2p and world_size < 2:
        raise GenerationError("point-to-point traffic needs at least two ranks")

    rng = random.Random(seed)
    groups: Dict[str, Tuple[int, ...]] = {WORLD: tuple(range(world_size))}
    seen = {tuple(range(world_size))}
    for _ in range(rng.randint(0, max_groups) if world_size > 1 else 0):
        size = rng.randint(2 if world_size > 1 else 1, world_size)
        members = tuple(sorted(rng.sample(range(world_size), size)))
        if members in seen:
            continue
        seen.add(members)
        groups[f"g{len(groups)}"] = members

    progs: List[List[Instruction]] = [[] for _ in range(world_size)]
    for name, members in groups.items():
        if name != WORLD:
            for r in members:
                progs[r].append(Instruction("create_comm", comm=name, members=members))

    def p2p(comm: str, members: Sequence[int]) -> None:
        a, b = rng.sample(list(members), 2)
        tag = rng.randint(0, 3)
        progs[a].append(Instruction("send", comm=comm, peer=b, tag=tag))
        progs[b].append(Instruction("recv", comm=comm, peer=a, tag=tag))

    # p2p budget: some at program start, the rest after blocking collectives
    kinds = ["nb" if rng.random() < nonblocking_fraction else "b" for _ in range(n_collectives)]
    comm_names = list(groups)
    choice = [rng.choice(comm_names) for _ in range(n_collectives)]
    slots = [i for i in range(n_collectives) if kinds[i] == "b" and len(groups[choice[i]]) >= 2]
    at_start = n_p2p if not slots else rng.randint(0, n_p2p // 3)
    after: Dict[int, int] = {}
    for _ in range(n_p2p - at_start):
        i = rng.choice(slots)
        after[i] = after.get(i, 0) + 1
    for _ in range(at_start):
        p2p(WORLD, range(world_size))

    pending: List[List[Tuple[int, str]]] = [[] for _ in range(world_size)]  # (due, request)
    req_counter = [0] * world_size

    def flush(position: int, force: bool = False) -> None:
        for r in range(world_size):
            due = [(d, q) for d, q in pending[r] if force or d <= position]
            if not due:
                continue
            pending[r] = [x for x in pending[r] if x not in due]
            names = tuple(q for _, q in due)
            if rng.random() < 0.3:
                progs[r].append(Instruction("test", requests=(names[0],)))
            if len(names) > 1 and rng.random() < 0.5:
                progs[r].append(Instruction("waitall", requests=names))
            else:
                for q in names:
                    progs[r].append(Instruction("wait", requests=(q,)))

    for i in range(n_collectives):
        flush(i)
        comm = choice[i]
        members = groups[comm]
        if kinds[i] == "b":
            kind = rng.choice(BLOCKING_KINDS)
            for r in members:
                progs[r].append(Instruction(kind, comm=comm))
            for _ in range(after.get(i, 0)):
                p2p(comm, members)
        else:
            kind = rng.choice(NONBLOCKING_KINDS)
            for r in members:
                req = f"r{req_counter[r]}"
                req_counter[r] += 1
                progs[r].append(Instruction("icollective", comm=comm, requests=(req,), kind=kind))
                pending[r].append((i + rng.randint(1, 4), req))
        for r in range(world_size):
            if rng.random() < compute_prob:
                progs[r].append(Instruction("compute", repeat=rng.randint(1, 3)))
    flush(n_collectives, force=True)

    programs = tuple(WorkloadProgram(r, tuple(progs[r])) for r in range(world_size))
    return Workload(world_size, programs, name=f"random-{seed}")


def instructions_of(workload: Workload) -> Iterable[Tuple[int, Instruction]]:
    for prog in workload.programs:
        for ins in prog.instructions:
            yield prog.rank, ins
