import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cc_snapshot import sim
from cc_snapshot.core import Ggid, TargetUpdateMsg
from cc_snapshot.protocols import CcProtocol, Phase
from cc_snapshot.sim import ProtocolInvariantError, SimConfig, World, run
from cc_snapshot.workload import generate_random_workload, parse_workload

from conftest import g

TWO = "rank 0: barrier world x2\nrank 1: barrier world x2\n"


def cc_world(text, **cfg):
    w = parse_workload(text)
    return World(w, SimConfig(w.world_size, **cfg), CcProtocol())


def step(world, rank, choice=None):
    world.apply(("rank", rank, choice))


def replay_condition_a_prime(result):
    """From the event log alone: after the request, a rank only starts a
    collective while some SEQ < TARGET, where targets come from the initial
    assignment and from received or self-raised updates."""
    seq = {}
    target = {}
    requested = False
    for e in result.events:
        p = e.payload
        if e.action == sim.REQUEST and not requested:
            requested = True
            for r in range(len(result.final_states)):
                target[r] = {gg: v for gg, v in result.initial_targets.items() if r in gg}
        elif e.action in (sim.ENTER, sim.INIT) and not p.get("protocol"):
            gg = Ggid(tuple(p["ggid"]))
            s = seq.setdefault(e.rank, {})
            if requested:
                t = target[e.rank]
                assert any(s.get(k, 0) < v for k, v in t.items()), f"rank {e.rank} ran past all targets at step {e.step}"
            s[gg] = s.get(gg, 0) + 1
            if requested:
                t[gg] = max(t.get(gg, 0), s[gg])
        elif e.action == sim.PMSG_RECV:
            gg = Ggid(tuple(p["ggid"]))
            target[e.rank][gg] = max(target[e.rank].get(gg, 0), p["new_target"])


class TestWrapper:
    def test_no_checkpoint_only_counts(self):
        world = cc_world(TWO)
        step(world, 0)
        assert world.ranks[0].proto.seq[g(0, 1)] == 1
        assert world.counters["protocol_messages_before_request"] == 0
        assert all(not box for box in world.inbox)

    def test_request_before_anything_ran(self):
        world = cc_world("world 3\nrank 0: barrier world\nrank 1: barrier world\nrank 2: barrier world\n")
        world.request_checkpoint()
        assert world.initial_targets == {}
        assert world.snapshot_taken

    def test_update_on_increment_past_target(self):
        text = (
            "world 3\n"
            "rank 0: create_comm a 0 1\nrank 0: barrier a\n"
            "rank 1: create_comm a 0 1\nrank 1: create_comm b 1 2\nrank 1: barrier b\nrank 1: barrier a\n"
            "rank 2: create_comm b 1 2\nrank 2: barrier b\n"
        )
        world = cc_world(text)
        step(world, 0)
        step(world, 0)  # rank 0 sits in a#1
        step(world, 1)
        step(world, 1)
        step(world, 2)  # every communicator is created
        world.request_checkpoint()
        assert world.initial_targets == {g(0, 1): 1, g(1, 2): 0}
        step(world, 1)  # rank 1 must reach a#1 and passes b#1 on the way: 1 > 0
        sends = [(e.rank, e.payload["to"], e.payload["ggid"], e.payload["new_target"])
                 for e in world.events if e.action == sim.PMSG_SEND]
        assert sends == [(1, 2, [1, 2], 1)]
        assert world.ranks[1].proto.target[g(1, 2)] == 1
        assert world.inbox[2] == [TargetUpdateMsg(g(1, 2), 1, 1)]
        # rank 2 had met its (zero) targets; the update sets it going again
        assert world.rank_choices(world.ranks[2]) == [("proto", 0)]
        step(world, 2, ("proto", 0))
        assert world.ranks[2].proto.forced_resumes == 1
        while not world.snapshot_taken:
            world.apply(world.enabled_actions()[0])
        assert [ps.proto.target.as_dict() for ps in world.ranks][2] == {g(1, 2): 1}

    def test_tie_sends_nothing(self):
        world = cc_world(TWO)
        step(world, 0)  # rank 0 in #1
        world.request_checkpoint()  # target {0,1}: 1
        step(world, 1)  # rank 1 enters #1: seq 1 == target 1
        assert world.counters["protocol_messages_after_request"] == 0

    def test_overshoot_update_chain(self, load):
        w = load("fig3a")
        res = run(SimConfig(7, 0), w, "cc", 75)
        sends = [(e.rank, e.payload["to"], tuple(e.payload["ggid"]), e.payload["new_target"])
                 for e in res.events if e.action == sim.PMSG_SEND]
        assert sends[:2] == [(3, 4, (3, 4, 5), 3), (3, 5, (3, 4, 5), 3)]
        assert (5, 6, (5, 6), 4) in sends
        # ranks 4 and 5 resume on the {3,4,5} update, rank 6 on the {5,6} one
        assert [ps.proto.forced_resumes for ps in res.final_states] == [0, 0, 0, 0, 1, 1, 1]
        replay_condition_a_prime(res)


class TestWaitForNewTargets:
    def setup_world(self):
        text = "world 2\nrank 0: create_comm a 0 1\nrank 0: barrier a\nrank 0: barrier world\nrank 1: create_comm a 0 1\nrank 1: barrier a\nrank 1: barrier world\n"
        world = cc_world(text)
        step(world, 0)
        step(world, 1)
        return world

    def test_unmet_target_returns_immediately(self):
        world = self.setup_world()
        step(world, 0)  # rank 0 enters a#1
        world.request_checkpoint()  # target a=1; rank 1 has seq 0
        world.inbox[1].append(TargetUpdateMsg(g(0, 1), 1, 0))
        assert CcProtocol().wait_for_new_targets(world, world.ranks[1]) is True
        assert len(world.inbox[1]) == 1  # no probe

    def test_no_calls_means_immediate_snapshot(self):
        world = self.setup_world()
        world.request_checkpoint()  # nothing executed: all targets 0, quiescent
        assert world.snapshot_taken

    def test_safe_once_everyone_leaves_the_collective(self):
        text = "world 2\nrank 0: barrier world\nrank 0: barrier world\nrank 1: compute\nrank 1: barrier world\nrank 1: barrier world\n"
        world = cc_world(text)
        step(world, 0)  # rank 0 in world#1
        world.request_checkpoint()  # target 1
        step(world, 1)  # compute
        step(world, 1)  # rank 1 enters world#1
        step(world, 0)
        step(world, 1)  # both out: quiescent
        assert world.snapshot_taken
        ps = world.ranks[0]
        assert ps.proto.phase is Phase.SAFE


class TestCheckpointRequest:
    def test_targets_are_member_maxima(self, load):
        res = run(SimConfig(7, 0), load("fig3a"), "cc", 75)
        assert res.initial_targets == {g(1, 2): 5, g(2, 3): 7, g(3, 4, 5): 2, g(5, 6): 3}
        # a rank outside a group never holds a target for it
        for ps in res.final_states:
            assert all(ps.rank in gg for gg in ps.proto.target.known())

    def test_nonmember_contributes_zero(self):
        text = "world 3\nrank 0: create_comm a 0 1\nrank 0: barrier a\nrank 1: create_comm a 0 1\nrank 1: barrier a\nrank 2: compute\n"
        world = cc_world(text)
        step(world, 0)
        step(world, 0)
        world.request_checkpoint()
        assert world.initial_targets == {g(0, 1): 1}
        assert world.ranks[2].proto.target.known() == ()

    def test_empty_run_immediately_safe(self):
        world = cc_world("world 2\nrank 0: compute\nrank 1: compute\n")
        world.request_checkpoint()
        assert world.snapshot_taken
        assert world.events[-1].action == sim.SNAPSHOT


class TestNonBlockingExtension:
    TEXT = (
        "world 2\n"
        "rank 0: icollective world r1\nrank 0: icollective world r2 ibcast\nrank 0: compute\nrank 0: waitall r1 r2\n"
        "rank 1: icollective world r1\nrank 1: icollective world r2 ibcast\nrank 1: wait r1\nrank 1: wait r2\n"
    )

    def test_seq_counted_at_initiation(self):
        world = cc_world(self.TEXT)
        step(world, 0)
        assert world.ranks[0].proto.seq[g(0, 1)] == 1
        step(world, 0)
        assert world.ranks[0].proto.seq[g(0, 1)] == 2
        assert world.ranks[0].proto.pending_collective_requests == ["0.0", "0.1"]

    def test_waitall_shrinks_by_k(self):
        world = cc_world(self.TEXT)
        for r in (0, 0, 1, 1, 0):
            step(world, r)
        step(world, 0)  # waitall
        assert world.ranks[0].proto.pending_collective_requests == []

    def test_failed_test_keeps_list(self):
        text = "world 2\nrank 0: icollective world r\nrank 0: test r\nrank 0: wait r\nrank 1: compute\nrank 1: icollective world r\nrank 1: wait r\n"
        world = cc_world(text)
        step(world, 0)
        step(world, 0)  # test: rank 1 has not initiated
        assert world.ranks[0].proto.pending_collective_requests == ["0.0"]

    def test_unrecorded_completion_is_a_bug(self):
        world = cc_world(self.TEXT)
        with pytest.raises(ProtocolInvariantError):
            CcProtocol().on_request_completion(world, world.ranks[0], "nope")

    @pytest.mark.parametrize("policy", ["eager", "lazy", "randomized"])
    def test_drain_between_init_and_completion(self, policy):
        world = cc_world(self.TEXT, progress_policy=policy)
        for r in (0, 0, 1, 1):
            step(world, r)
        world.request_checkpoint()
        while not world.snapshot_taken:
            acts = world.enabled_actions()
            assert acts
            world.apply(acts[0])
        snap = [e for e in world.events if e.action == sim.SNAPSHOT]
        assert all(e.payload["state"]["pending"] == [] for e in snap)
        assert all(ps.proto.phase is Phase.SAFE for ps in world.ranks)


class TestQuiescence:
    def test_in_flight_update_blocks_quiescence(self):
        world = cc_world(TWO)
        step(world, 0)
        world.request_checkpoint()
        world.inbox[1].append(TargetUpdateMsg(g(0, 1), 1, 0))
        assert not CcProtocol().detect_quiescence(world)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 6), st.integers(1, 25), st.integers(0, 6),
           st.sampled_from([0.0, 0.4, 1.0]), st.sampled_from(["eager", "lazy", "randomized"]), st.floats(0, 1))
    def test_safe_and_faithful(self, seed, size, nc, np_, nbf, policy, frac):
        w = generate_random_workload(seed, size, nc, np_, nbf)
        cfg = SimConfig(size, seed, progress_policy=policy)
        ticks = run(cfg, w).metrics.ticks
        res = run(cfg, w, "cc", int(frac * ticks))
        assert res.status == "snapshot"
        assert res.verdict.ok, res.verdict.summary()
        assert res.metrics.protocol_messages_before_request == 0
        replay_condition_a_prime(res)
        for ps in res.final_states:
            assert ps.proto.phase is Phase.SAFE
            for gg, v in ps.proto.target.items():
                assert all(res.final_states[m].proto.target[gg] == v for m in gg.members)
                assert v >= res.initial_targets.get(gg, 0)
