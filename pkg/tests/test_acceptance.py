"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import random
import time

import pytest

from cc_snapshot import sim
from cc_snapshot.cli import EXIT_UNSUPPORTED, main, resolve_workload, shipped_workloads
from cc_snapshot.core import Ggid, RequestState
from cc_snapshot.oracle import TARGETS, explore_interleavings
from cc_snapshot.protocols.cc import Phase
from cc_snapshot.sim import DeadlockError, SimConfig, run
from cc_snapshot.workload import generate_random_workload, serialize_workload

POLICIES = ("eager", "lazy", "randomized")

SMALL_CORPUS = ("barrier2", "chain3", "fig2a", "fig2b3", "nb_overlap", "nb_multi", "p2p_fenced",
                "wildcard", "mixed", "subgroups", "nb_test")

NONBLOCKING = ("nb_overlap", "nb_multi", "nb_test", "poisson")


def target_convergence_problems(result):
    """Every member of a group holds the same TARGET, equal to the largest member SEQ."""
    states = {ps.rank: ps.proto for ps in result.final_states}
    groups = set()
    for st in states.values():
        groups.update(st.seq.known())
        groups.update(st.target.known())
    problems = []
    for gg in sorted(groups):
        held = {r: states[r].target[gg] for r in gg.members}
        top = max(states[r].seq[gg] for r in gg.members)
        if set(held.values()) != {top}:
            problems.append(f"{gg}: targets {held}, max seq {top}")
    return problems


def safe_snapshot_problems(result):
    problems = []
    if not result.world.snapshot_taken:
        return ["no snapshot"]
    if any(ps.proto.phase is not Phase.SAFE for ps in result.final_states):
        problems.append("a rank is not in phase safe")
    if not result.verdict.ok:
        problems.append(result.verdict.summary())
    problems += target_convergence_problems(result)
    return problems


def random_case(i):
    rng = random.Random(i)
    ws = rng.randint(2, 8)
    w = generate_random_workload(i, ws, rng.randint(1, 40), rng.randint(0, 10), rng.choice([0.0, 0.3, 0.6, 1.0]))
    return rng, w, POLICIES[i % 3]


def test_criterion_1_seven_rank_golden(criterion):
    start = time.perf_counter()
    res = run(SimConfig(7, 0), resolve_workload("fig3a"), "cc", 75)
    elapsed = time.perf_counter() - start

    problems = []
    expected = {Ggid((1, 2)): 5, Ggid((2, 3)): 7, Ggid((3, 4, 5)): 2, Ggid((5, 6)): 3}
    if res.initial_targets != expected:
        problems.append(f"initial targets {res.initial_targets}")
    sends = [(e.rank, e.payload["to"], tuple(e.payload["ggid"]), e.payload["new_target"])
             for e in res.events if e.action == sim.PMSG_SEND]
    if sends[:2] != [(3, 4, (3, 4, 5), 3), (3, 5, (3, 4, 5), 3)]:
        problems.append(f"first updates {sends[:2]}")
    # rank 5 is forced past its met targets into the {5,6} group
    request_step = next(e.step for e in res.events if e.action == sim.REQUEST)
    after = [e for e in res.events if e.step > request_step and e.action == sim.ENTER]
    reentries = [e for e in after if e.rank == 5 and tuple(e.payload["ggid"]) == (5, 6)]
    if res.final_states[5].proto.forced_resumes < 1 or not reentries:
        problems.append("no forced {5,6} re-execution at rank 5")
    if (5, 6, (5, 6), 4) not in sends:
        problems.append("missing {5,6} update 3 -> 4")
    problems += safe_snapshot_problems(res)
    if elapsed >= 1.0:
        problems.append(f"took {elapsed:.2f}s")
    criterion(1, not problems, f"{elapsed:.3f}s" if not problems else "; ".join(problems))
    assert not problems


def test_criterion_2_zero_overhead_before_request(criterion):
    start = time.perf_counter()
    workloads = [resolve_workload(n) for n in shipped_workloads()]
    for i in range(200):
        workloads.append(random_case(i)[1])
    problems = []
    checked_2pc = 0
    for w in workloads:
        config = SimConfig(w.world_size, 1)
        outcome = {}
        for proto in ("none", "cc"):
            try:
                outcome[proto] = run(config, w, proto)
            except DeadlockError as exc:  # erroneous programs: compare up to the deadlock
                outcome[proto] = exc.result
        native, cc = outcome["none"], outcome["cc"]
        if cc.event_log != native.event_log:
            problems.append(f"{w.name}: cc log differs from native")
        if cc.metrics.protocol_messages_before_request != 0:
            problems.append(f"{w.name}: protocol messages before request")
        if w.has_nonblocking or native.status != "completed":
            continue
        two = run(config, w, "2pc")
        blocking = sum(1 for e in native.events if e.action == sim.ENTER)
        checked_2pc += 1
        if two.metrics.extra_sync_events < blocking:
            problems.append(f"{w.name}: 2pc extra sync {two.metrics.extra_sync_events} < {blocking}")
    elapsed = time.perf_counter() - start
    if elapsed >= 10:
        problems.append(f"took {elapsed:.2f}s")
    detail = f"{len(workloads)} workloads, {checked_2pc} with 2pc, {elapsed:.2f}s"
    criterion(2, not problems, detail if not problems else "; ".join(problems[:3]))
    assert not problems


def test_criterion_3_safety_differential(criterion):
    start = time.perf_counter()
    problems = []
    for i in range(500):
        rng, w, policy = random_case(i)
        config = SimConfig(w.world_size, i, progress_policy=policy)
        native = run(config, w, "none")
        at = rng.randint(0, native.metrics.ticks)
        try:
            res = run(config, w, "cc", at)
        except sim.SimError as exc:
            problems.append(f"case {i}: {type(exc).__name__}: {exc}")
            continue
        problems += [f"case {i}: {p}" for p in safe_snapshot_problems(res)]
    elapsed = time.perf_counter() - start
    if elapsed >= 120:
        problems.append(f"took {elapsed:.1f}s")
    criterion(3, not problems, f"500 runs, 0 violations, {elapsed:.1f}s" if not problems else "; ".join(problems[:3]))
    assert not problems


def test_criterion_4_exhaustive_small_instances(criterion):
    start = time.perf_counter()
    problems = []
    states = 0
    for name in SMALL_CORPUS:
        w = resolve_workload(name)
        assert w.world_size <= 3 and w.instruction_count() <= 12
        for policy in POLICIES:
            v = explore_interleavings(w, "cc", "all", policy)
            states += v.states
            if not v.ok or v.bounded or v.snapshots == 0:
                problems.append(f"{name}/{policy}: {v.summary()}")
    cyclic = explore_interleavings(resolve_workload("cyclic"), "cc", "all")
    if cyclic.deadlock_count == 0:
        problems.append("cyclic workload not reported as deadlocking")
    elapsed = time.perf_counter() - start
    if elapsed >= 300:
        problems.append(f"took {elapsed:.1f}s")
    detail = f"{len(SMALL_CORPUS)} workloads x 3 policies, {states} states, cyclic deadlocks, {elapsed:.1f}s"
    criterion(4, not problems, detail if not problems else "; ".join(problems[:3]))
    assert not problems


def _request_in_flight(world):
    return any(req.state is RequestState.PENDING and not req.id.endswith(".trial")
               for req in world.requests.values())


def drain_problems(res):
    """Check from the log that every initiated request completed before the snapshot."""
    initiated, completed, problems = set(), set(), []
    for e in res.events:
        if e.action == sim.INIT and not e.payload.get("protocol"):
            initiated.add(e.payload["request"])
        elif e.action == sim.COMPLETE:
            completed.add(e.payload["request"])
        elif e.action == sim.SNAPSHOT:
            if initiated - completed:
                problems.append(f"snapshot with open requests {sorted(initiated - completed)}")
            break
    if any(ps.proto.pending_collective_requests for ps in res.final_states):
        problems.append("pending list not empty at snapshot")
    return problems


def test_criterion_5_nonblocking_drain(criterion):
    start = time.perf_counter()
    problems = []
    runs = drained = explored = 0
    for name in NONBLOCKING:
        w = resolve_workload(name)
        for policy in POLICIES:
            if w.world_size <= 3:
                v = explore_interleavings(w, "cc", _request_in_flight, policy)
                explored += v.snapshots
                if not v.ok or v.snapshots == 0:
                    problems.append(f"{name}/{policy}: {v.summary()}")
            for seed in range(15):
                res = run(SimConfig(w.world_size, seed, progress_policy=policy), w, "cc", _request_in_flight)
                if res.world.request_tick is None:
                    continue
                runs += 1
                drained += res.metrics.drain_iterations > 0
                problems += [f"{name}/{policy}/{seed}: {p}" for p in drain_problems(res) + safe_snapshot_problems(res)]
    if runs == 0 or drained == 0:
        problems.append("no run exercised the drain")
    elapsed = time.perf_counter() - start
    if elapsed >= 30:
        problems.append(f"took {elapsed:.1f}s")
    detail = f"{runs} runs ({drained} drained), {explored} explored snapshots, {elapsed:.1f}s"
    criterion(5, not problems, detail if not problems else "; ".join(problems[:3]))
    assert not problems


def test_criterion_6_2pc_rejects_nonblocking(criterion, tmp_path):
    names = [n for n in shipped_workloads() if resolve_workload(n).has_nonblocking]
    generated = []
    for i in range(20):
        w = generate_random_workload(i, 3, 6, 0, 1.0)
        path = tmp_path / f"gen{i}.workload"
        path.write_text(serialize_workload(w))
        generated.append(str(path))
    codes = {n: main(["run", "--workload", n, "--protocol", "2pc", "--out", str(tmp_path / "out")])
             for n in names + generated}
    wrong = {n: c for n, c in codes.items() if c != EXIT_UNSUPPORTED}
    criterion(6, bool(names) and not wrong, f"{len(codes)} non-blocking workloads exit {EXIT_UNSUPPORTED}" if not wrong else str(wrong))
    assert names and not wrong


def test_criterion_7_target_convergence(criterion):
    """Convergence over runs of every kind used in 1 to 5, checked directly on
    final rank states and by the oracle."""
    problems = []
    runs = 0
    cases = [(resolve_workload("fig3a"), 0, 75, "eager")]
    for name in SMALL_CORPUS + NONBLOCKING + ("lammps", "fig2b"):
        w = resolve_workload(name)
        for seed in range(6):
            cases.append((w, seed, _request_in_flight if seed % 2 else seed * 3, POLICIES[seed % 3]))
    for i in range(100):
        rng, w, policy = random_case(i)
        cases.append((w, i, rng.randint(0, 60), policy))
    for w, seed, at, policy in cases:
        res = run(SimConfig(w.world_size, seed, progress_policy=policy), w, "cc", at)
        if not res.world.snapshot_taken:
            continue
        runs += 1
        problems += [f"{w.name}/{seed}: {p}" for p in target_convergence_problems(res)]
        if not res.verdict.passed(TARGETS):
            problems.append(f"{w.name}/{seed}: {res.verdict.checks[TARGETS].witness}")
    for name in ("fig2b3", "nb_multi"):
        v = explore_interleavings(resolve_workload(name), "cc", "all")
        if not v.ok:
            problems.append(f"{name}: {v.summary()}")
    criterion(7, not problems and runs > 0, f"{runs} runs plus 2 explorations converged" if not problems else "; ".join(problems[:3]))
    assert not problems and runs > 0
