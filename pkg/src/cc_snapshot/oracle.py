"""Independent checks of snapshot safety.

The oracle never looks at protocol state to decide what *should* have
happened.  It rebuilds the execution graph (one node per collective instance,
one rank-labelled edge per consecutive pair of a rank's collectives) from the
event log, derives the minimal consistent frontier for the instant of the
checkpoint request, and compares the snapshot against it.  Protocol state
dumped at the snapshot is only compared, never trusted.

``explore_interleavings`` enumerates every scheduler choice of small worlds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from . import sim
from .sim import SimEvent


class GraphError(ValueError):
    """The event log is structurally inconsistent."""


@dataclass
class Visit:
    rank: int
    enter_step: int
    ordinal: int  # the rank's call count on this ggid including this call
    exit_step: Optional[int] = None


@dataclass
class CollectiveNode:
    instance: str
    comm: str
    ggid: Tuple[int, ...]
    blocking: bool
    visitors: Dict[int, Visit] = field(default_factory=dict)

    @property
    def members(self) -> Tuple[int, ...]:
        return self.ggid

    @property
    def ordinal(self) -> Optional[int]:
        """Sequence number the instance carries; None if members disagree (aliased groups)."""
        values = {v.ordinal for v in self.visitors.values()}
        return values.pop() if len(values) == 1 else None


@dataclass
class ExecutionGraph:
    nodes: Dict[str, CollectiveNode]
    chains: Dict[int, List[str]]
    edges: List[Tuple[str, str, int]]

    def predecessors(self, node: str) -> Set[str]:
        return {u for u, v, _ in self.edges if v == node}

    def ancestors(self, node: str) -> Set[str]:
        preds: Dict[str, Set[str]] = {}
        for u, v, _ in self.edges:
            preds.setdefault(v, set()).add(u)
        seen: Set[str] = set()
        todo = [node]
        while todo:
            for u in preds.get(todo.pop(), ()):
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        return seen

    def depends_on(self, later: str, earlier: str) -> bool:
        """True iff *later* is (transitively) dependent on *earlier*."""
        return earlier in self.ancestors(later)

    def is_downward_closed(self, nodes: Iterable[str]) -> bool:
        nodes = set(nodes)
        return all(self.ancestors(n) <= nodes for n in nodes)

    def position(self, rank: int, node: str) -> Optional[int]:
        try:
            return self.chains.get(rank, []).index(node)
        except ValueError:
            return None


def _events(log: Union[str, Sequence[SimEvent]]) -> List[SimEvent]:
    if isinstance(log, str):
        return [SimEvent.from_record(json.loads(line)) for line in log.splitlines() if line.strip()]
    return list(log)


def build_graph(log: Union[str, Sequence[SimEvent]]) -> ExecutionGraph:
    """Build the execution graph of application collectives from an event log."""
    events = _events(log)
    nodes: Dict[str, CollectiveNode] = {}
    chains: Dict[int, List[str]] = {}
    counts: Dict[Tuple[int, Tuple[int, ...]], int] = {}
    last_step = -1
    for ev in events:
        if ev.step <= last_step:
            raise GraphError(f"event steps must increase (step {ev.step} after {last_step})")
        last_step = ev.step
        p = ev.payload
        if ev.action in (sim.ENTER, sim.INIT):
            if p.get("protocol"):
                continue
            ggid = tuple(p["ggid"])
            if ev.rank not in ggid:
                raise GraphError(f"rank {ev.rank} entered {p['instance']} but is not in {ggid}")
            node = nodes.setdefault(p["instance"], CollectiveNode(p["instance"], p["comm"], ggid, ev.action == sim.ENTER))
            if node.ggid != ggid:
                raise GraphError(f"instance {node.instance} used with two groups")
            if ev.rank in node.visitors:
                raise GraphError(f"rank {ev.rank} entered {node.instance} twice")
            n = counts[(ev.rank, ggid)] = counts.get((ev.rank, ggid), 0) + 1
            node.visitors[ev.rank] = Visit(ev.rank, ev.step, n)
            chains.setdefault(ev.rank, []).append(node.instance)
        elif ev.action == sim.EXIT:
            node = nodes.get(p["instance"])
            visit = node.visitors.get(ev.rank) if node else None
            if visit is None or visit.exit_step is not None:
                raise GraphError(f"rank {ev.rank} exits {p['instance']} without a matching enter")
            visit.exit_step = ev.step
    edges = [(c[i], c[i + 1], r) for r, c in sorted(chains.items()) for i in range(len(c) - 1)]
    return ExecutionGraph(nodes, chains, edges)


@dataclass
class SnapshotCut:
    """Where each rank stands at the snapshot.

    ``positions[r]`` is the number of collectives rank r has entered or
    initiated; ``at_request`` the same count at the checkpoint request.
    """

    positions: Dict[int, int]
    inside: Dict[int, str] = field(default_factory=dict)
    pending: Dict[int, List[str]] = field(default_factory=dict)
    at_request: Optional[Dict[int, int]] = None
    seq: Optional[Dict[int, Dict[str, int]]] = None
    targets: Optional[Dict[int, Dict[str, int]]] = None


def cut_from_events(log: Union[str, Sequence[SimEvent]]) -> SnapshotCut:
    events = _events(log)
    snap = next((e.step for e in events if e.action == sim.SNAPSHOT), None)
    if snap is None:
        raise GraphError("event log has no snapshot")
    req = next((e.step for e in events if e.action == sim.REQUEST), None)
    positions: Dict[int, int] = {}
    at_request: Optional[Dict[int, int]] = {} if req is not None else None
    inside: Dict[int, str] = {}
    pending: Dict[int, Dict[str, None]] = {}
    seq: Dict[int, Dict[str, int]] = {}
    targets: Dict[int, Dict[str, int]] = {}
    for ev in events:
        p = ev.payload
        positions.setdefault(ev.rank, 0)
        if at_request is not None:
            at_request.setdefault(ev.rank, 0)
        if ev.action == sim.SNAPSHOT:
            state = p.get("state") or {}
            if "seq" in state:
                seq[ev.rank] = state["seq"]
            if "target" in state:
                targets[ev.rank] = state["target"]
            continue
        if ev.step > snap:
            continue
        if ev.action in (sim.ENTER, sim.INIT) and not p.get("protocol"):
            positions[ev.rank] += 1
            if req is not None and ev.step < req:
                at_request[ev.rank] += 1
            if ev.action == sim.ENTER:
                inside[ev.rank] = p["instance"]
            else:
                pending.setdefault(ev.rank, {})[p["request"]] = None
        elif ev.action == sim.EXIT:
            inside.pop(ev.rank, None)
        elif ev.action == sim.COMPLETE and not p.get("protocol"):
            pending.get(ev.rank, {}).pop(p["request"], None)
    return SnapshotCut(
        positions,
        inside,
        {r: list(v) for r, v in pending.items() if v},
        at_request,
        seq or None,
        targets or None,
    )


@dataclass
class Check:
    name: str
    passed: bool
    witness: Optional[str] = None
    skipped: bool = False


INV1, COND1, INV2, COND2, TARGETS = "invariant-1", "condition-1", "invariant-2", "condition-2", "target-convergence"
SAFETY_CHECKS = (INV1, COND1, INV2)
ALL_CHECKS = (INV1, COND1, INV2, COND2, TARGETS)


@dataclass
class SnapshotVerdict:
    checks: Dict[str, Check]
    frontier: Dict[int, int] = field(default_factory=dict)
    required: Dict[int, int] = field(default_factory=dict)
    oracle_targets: Dict[Tuple[int, ...], int] = field(default_factory=dict)

    def passed(self, name: str) -> bool:
        return self.checks[name].passed

    @property
    def safe(self) -> bool:
        return all(self.checks[n].passed for n in SAFETY_CHECKS)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failures(self, names: Sequence[str] = ALL_CHECKS) -> List[Check]:
        return [self.checks[n] for n in names if not self.checks[n].passed]

    def to_record(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "safe": self.safe,
            "checks": {
                n: {"passed": c.passed, "skipped": c.skipped, "witness": c.witness} for n, c in self.checks.items()
            },
            "frontier": {str(r): v for r, v in sorted(self.frontier.items())},
            "required_frontier": {str(r): v for r, v in sorted(self.required.items())},
            "oracle_targets": {"{" + ",".join(map(str, g)) + "}": v for g, v in sorted(self.oracle_targets.items())},
        }

    def summary(self) -> str:
        return ", ".join(f"{n}={'skip' if c.skipped else ('pass' if c.passed else 'FAIL')}" for n, c in self.checks.items())


def _ggid_str(g: Tuple[int, ...]) -> str:
    return "{" + ",".join(map(str, g)) + "}"


def required_frontier(graph: ExecutionGraph, start: Dict[int, int]) -> Dict[int, int]:
    """Smallest per-rank prefix lengths >= *start* that are closed under
    "every member finishes a visited instance" and "every member reaches the
    highest per-group call count any member reached"."""
    p = {r: start.get(r, 0) for r in set(graph.chains) | set(start)}
    chains = graph.chains
    changed = True
    while changed:
        changed = False

        def raise_to(rank: int, length: int) -> None:
            nonlocal changed
            if length > p.get(rank, 0):
                p[rank] = length
                changed = True

        for r in list(p):
            for inst in chains.get(r, [])[: p[r]]:
                for m in graph.nodes[inst].members:
                    pos = graph.position(m, inst)
                    if pos is not None:
                        raise_to(m, pos + 1)
        target: Dict[Tuple[int, ...], int] = {}
        for r in list(p):
            for inst in chains.get(r, [])[: p[r]]:
                g = graph.nodes[inst].ggid
                target[g] = max(target.get(g, 0), graph.nodes[inst].visitors[r].ordinal)
        for g, t in target.items():
            for m in g:
                for pos, inst in enumerate(chains.get(m, [])):
                    node = graph.nodes[inst]
                    if node.ggid == g and node.visitors[m].ordinal == t:
                        raise_to(m, pos + 1)
                        break
    return p


def _group_counts(graph: ExecutionGraph, prefix: Dict[int, int]) -> Dict[int, Dict[Tuple[int, ...], int]]:
    out: Dict[int, Dict[Tuple[int, ...], int]] = {}
    for r, n in prefix.items():
        counts = out.setdefault(r, {})
        for inst in graph.chains.get(r, [])[:n]:
            g = graph.nodes[inst].ggid
            counts[g] = counts.get(g, 0) + 1
    return out


def check_snapshot(graph: ExecutionGraph, cut: SnapshotCut) -> SnapshotVerdict:
    checks: Dict[str, Check] = {}
    pos = {r: cut.positions.get(r, 0) for r in set(cut.positions) | set(graph.chains)}

    inside = sorted(cut.inside.items())
    checks[INV1] = Check(
        INV1, not inside, f"rank {inside[0][0]} is inside {inside[0][1]}" if inside else None
    )

    visited: Dict[str, Set[int]] = {}
    for r, n in pos.items():
        for inst in graph.chains.get(r, [])[:n]:
            visited.setdefault(inst, set()).add(r)
    witness = None
    for inst in sorted(visited):
        missing = sorted(set(graph.nodes[inst].members) - visited[inst])
        if missing:
            witness = f"{inst} visited by {sorted(visited[inst])} but not by {missing}"
            break
    checks[COND1] = Check(COND1, witness is None, witness)

    pending = [(r, q) for r, qs in sorted(cut.pending.items()) for q in qs]
    checks[INV2] = Check(
        INV2, not pending, f"rank {pending[0][0]} still holds request {pending[0][1]}" if pending else None
    )

    required: Dict[int, int] = {}
    oracle_targets: Dict[Tuple[int, ...], int] = {}
    if cut.at_request is None:
        checks[COND2] = Check(COND2, True, "no checkpoint request in log", skipped=True)
    else:
        required = required_frontier(graph, cut.at_request)
        witness = None
        for r in sorted(pos):
            if pos[r] > required.get(r, 0):
                extra = graph.chains[r][required.get(r, 0)]
                witness = f"rank {r} executed {extra} beyond the required frontier ({required.get(r, 0)} collectives)"
                break
        checks[COND2] = Check(COND2, witness is None, witness)
        for counts in _group_counts(graph, required).values():
            for g, v in counts.items():
                oracle_targets[g] = max(oracle_targets.get(g, 0), v)

    checks[TARGETS] = _check_targets(graph, cut, pos, oracle_targets)
    return SnapshotVerdict(checks, pos, required, oracle_targets)


def _check_targets(graph, cut: SnapshotCut, pos, oracle_targets) -> Check:
    if cut.targets is None:
        return Check(TARGETS, True, "no target tables in snapshot", skipped=True)
    observed = _group_counts(graph, pos)
    groups: Dict[str, Tuple[int, ...]] = {}
    for table in cut.targets.values():
        for g in table:
            groups[g] = tuple(int(x) for x in g.strip("{}").split(","))
    for gs, g in sorted(groups.items()):
        values = {m: cut.targets.get(m, {}).get(gs) for m in g}
        distinct = set(values.values())
        if len(distinct) != 1 or None in distinct:
            return Check(TARGETS, False, f"members of {gs} disagree on the target: {values}")
        t = distinct.pop()
        best = max(observed.get(m, {}).get(g, 0) for m in g)
        if t != best:
            return Check(TARGETS, False, f"target {t} for {gs} != max member call count {best}")
        for m in g:
            if observed.get(m, {}).get(g, 0) != t:
                return Check(TARGETS, False, f"rank {m} made {observed.get(m, {}).get(g, 0)} calls on {gs}, target {t}")
            if cut.seq is not None and cut.seq.get(m, {}).get(gs, 0) != t:
                return Check(TARGETS, False, f"rank {m} reports SEQ {cut.seq[m].get(gs, 0)} on {gs}, target {t}")
        if oracle_targets and t != oracle_targets.get(g, 0):
            return Check(TARGETS, False, f"target {t} for {gs} != oracle-derived {oracle_targets.get(g, 0)}")
    return Check(TARGETS, True)


# ---------------------------------------------------------------------- exploration


@dataclass(frozen=True)
class Bounds:
    max_states: int = 200_000
    max_instructions: int = 24
    max_world_size: int = 4


@dataclass
class Witness:
    kind: str  # deadlock | violation | error
    message: str
    trace: List[tuple]

    def describe(self) -> str:
        return f"{self.message} [trace: {' '.join(_fmt_action(a) for a in self.trace)}]"

    def to_record(self) -> Dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "trace": [_fmt_action(a) for a in self.trace]}


def _fmt_action(a: tuple) -> str:
    if a[0] == "request":
        return "REQ"
    if a[0] == "progress":
        return "P(" + sim._inst_id(a[1]) + ")"
    choice = a[2]
    if choice is None:
        return f"r{a[1]}"
    if isinstance(choice, tuple):
        return f"r{a[1]}:{'/'.join(map(str, choice))}"
    return f"r{a[1]}<{choice}"


@dataclass
class ExplorationVerdict:
    protocol: str
    policy: str
    states: int = 0
    completed: int = 0
    snapshots: int = 0
    deadlock_count: int = 0
    violation_count: int = 0
    error_count: int = 0
    cycles: int = 0
    bounded: bool = False
    deadlocks: List[Witness] = field(default_factory=list)
    violations: List[Witness] = field(default_factory=list)
    error_witnesses: List[Witness] = field(default_factory=list)
    frontiers: Set[Tuple[int, ...]] = field(default_factory=set)

    @property
    def errors(self) -> List[str]:
        return [w.message for w in self.error_witnesses]

    @property
    def ok(self) -> bool:
        return not (self.deadlock_count or self.violation_count or self.error_count or self.cycles or self.bounded)

    def summary(self) -> str:
        text = (
            f"{self.protocol}/{self.policy}: {self.states} states, {self.completed} completed, "
            f"{self.snapshots} snapshots, {self.deadlock_count} deadlocks, {self.violation_count} violations, "
            f"{self.error_count} errors, {self.cycles} cycles"
        )
        return text + (" (bounded: state limit reached)" if self.bounded else "")

    def to_record(self) -> Dict[str, Any]:
        return {
            "protocol": self.protocol,
            "policy": self.policy,
            "states": self.states,
            "completed": self.completed,
            "snapshots": self.snapshots,
            "deadlocks": self.deadlock_count,
            "violations": self.violation_count,
            "errors": self.error_count,
            "cycles": self.cycles,
            "bounded": self.bounded,
            "ok": self.ok,
            "witnesses": [w.to_record() for w in self.deadlocks + self.violations + self.error_witnesses],
            "frontiers": sorted(list(f) for f in self.frontiers),
        }


def required_checks(protocol_name: str) -> Tuple[str, ...]:
    if protocol_name == "cc":
        return ALL_CHECKS
    return SAFETY_CHECKS


_MAX_WITNESSES = 5


def explore_interleavings(
    workload,
    protocol="cc",
    request: Union[str, Callable[[Any], bool]] = "all",
    policy="eager",
    bounds: Bounds = Bounds(),
) -> ExplorationVerdict:
    """Depth-first search over every scheduler choice, memoized on world state.

    ``request`` is "all" (the checkpoint request may happen at any instant,
    including never), "never", or a predicate over the world enabling the
    request where it holds.  Every snapshot is checked with
    ``check_snapshot``; every stuck state is a deadlock.
    """
    from .protocols import get_protocol

    proto = get_protocol(protocol)
    if workload.world_size > bounds.max_world_size:
        raise ValueError(f"exhaustive exploration supports at most {bounds.max_world_size} ranks")
    n_ops = sum(len(ops) for ops in sim.expand(workload))
    if n_ops > bounds.max_instructions:
        raise ValueError(f"workload has {n_ops} instructions, bound is {bounds.max_instructions}")
    config = sim.SimConfig(workload.world_size, progress_policy=policy)
    verdict = ExplorationVerdict(proto.name, config.progress_policy.value)
    if bounds.max_states <= 0:
        verdict.bounded = True
        return verdict

    needed = required_checks(proto.name)

    def actions(world) -> List[tuple]:
        acts = world.enabled_actions()
        if not world.requested and not world.snapshot_taken and request != "never":
            if request == "all" or (callable(request) and request(world)):
                acts.append(("request",))
        return acts

    def record(bucket: List[Witness], w: Witness) -> None:
        if len(bucket) < _MAX_WITNESSES:
            bucket.append(w)

    def classify(world, trace) -> Optional[List[tuple]]:
        """Record terminal outcomes; return the successors of a live state."""
        if world.snapshot_taken:
            verdict.snapshots += 1
            verdict.frontiers.add(tuple(ps.entered for ps in world.ranks))
            sv = check_snapshot(build_graph(world.events), cut_from_events(world.events))
            bad = sv.failures(needed)
            if bad:
                verdict.violation_count += 1
                record(verdict.violations, Witness("violation", f"{bad[0].name}: {bad[0].witness}", list(trace)))
            return None
        acts = actions(world)
        if acts:
            return acts
        if world.all_done():
            verdict.completed += 1
        else:
            verdict.deadlock_count += 1
            record(verdict.deadlocks, Witness("deadlock", world.deadlock_report().describe(), list(trace)))
        return None

    try:
        root = sim.World(workload, config, proto)
    except sim.UnsupportedFeatureError as exc:
        verdict.error_count += 1
        record(verdict.error_witnesses, Witness("error", f"unsupported: {exc}", []))
        return verdict
    trace: List[tuple] = []
    root_key = root.state_key()
    seen = {root_key}
    verdict.states = 1
    acts = classify(root, trace)
    if acts is None:
        return verdict
    stack = [[root, acts, 0, root_key]]
    on_path = {root_key}
    while stack:
        frame = stack[-1]
        world, acts, i, key = frame
        if i >= len(acts):
            stack.pop()
            on_path.discard(key)
            if trace:
                trace.pop()
            continue
        frame[2] = i + 1
        act = acts[i]
        child = world if i + 1 == len(acts) else world.clone()
        try:
            child.apply(act)
        except sim.ErroneousProgramError as exc:
            verdict.error_count += 1
            record(verdict.error_witnesses, Witness("error", str(exc), trace + [act]))
            continue
        except sim.SimError as exc:
            verdict.violation_count += 1
            record(verdict.violations, Witness("violation", f"{type(exc).__name__}: {exc}", trace + [act]))
            continue
        ckey = child.state_key()
        if ckey in on_path:
            verdict.cycles += 1
            continue
        if ckey in seen:
            continue
        seen.add(ckey)
        verdict.states += 1
        if verdict.states >= bounds.max_states:
            verdict.bounded = True
            break
        trace.append(act)
        succ = classify(child, trace)
        if succ is None:
            trace.pop()
            continue
        stack.append([child, succ, 0, ckey])
        on_path.add(ckey)
    return verdict
