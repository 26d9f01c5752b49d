import json

import pytest

from cc_snapshot.cli import (
    EXIT_BOUNDED,
    EXIT_DEADLOCK,
    EXIT_OK,
    EXIT_UNSUPPORTED,
    EXIT_USAGE,
    EXIT_VIOLATION,
    main,
    resolve_workload,
    shipped_workloads,
)


def cli(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


class TestRun:
    def test_fig3a_targets(self, tmp_path, capsys):
        assert cli(tmp_path, "run", "--workload", "fig3a", "--protocol", "cc", "--request-at", "75") == EXIT_OK
        out = capsys.readouterr().out
        assert "initial targets: {1,2}:5, {2,3}:7, {3,4,5}:2, {5,6}:3" in out
        verdict = json.loads((tmp_path / "verdict.json").read_text())
        assert verdict["status"] == "snapshot"
        assert verdict["verdict"]["ok"]
        assert (tmp_path / "events.log").read_text().startswith('{"step":0,"tick":')
        metrics = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        assert metrics[0]["protocol_messages_before_request"] == 0

    def test_native_counters_zero(self, tmp_path):
        assert cli(tmp_path, "run", "--workload", "mixed", "--protocol", "none") == EXIT_OK
        m = json.loads((tmp_path / "metrics.jsonl").read_text())
        assert m["protocol_messages_before_request"] == m["protocol_messages_after_request"] == 0
        assert m["extra_sync_events"] == m["drain_iterations"] == 0

    @pytest.mark.parametrize("name", ["poisson", "nb_overlap", "nb_multi", "nb_test"])
    def test_2pc_rejects_nonblocking(self, tmp_path, name):
        assert cli(tmp_path, "run", "--workload", name, "--protocol", "2pc") == EXIT_UNSUPPORTED

    def test_deadlock(self, tmp_path, capsys):
        assert cli(tmp_path, "run", "--workload", "fig5", "--protocol", "none") == EXIT_DEADLOCK
        assert "p2p-crosses-collective" in capsys.readouterr().out

    def test_workload_path(self, tmp_path):
        path = tmp_path / "w.workload"
        path.write_text("rank 0: barrier world\nrank 1: barrier world\n")
        assert cli(tmp_path, "run", "--workload", str(path), "--request-at", "1") == EXIT_OK

    @pytest.mark.parametrize("request_at", ["random", "none", "0", "1000"])
    def test_request_forms(self, tmp_path, request_at):
        assert cli(tmp_path, "run", "--workload", "chain3", "--request-at", request_at, "--seed", "3") == EXIT_OK

    def test_byte_stable(self, tmp_path):
        outputs = []
        for i in range(2):
            d = tmp_path / str(i)
            cli(d, "run", "--workload", "poisson", "--request-at", "random", "--seed", "7", "--progress", "random")
            outputs.append([(d / f).read_bytes() for f in ("events.log", "metrics.jsonl", "verdict.json")])
        assert outputs[0] == outputs[1]


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [
            ["run", "--workload", "no-such-workload"],
            ["run", "--workload", "chain3", "--protocol", "bogus"],
            ["run", "--workload", "chain3", "--request-at", "soon"],
            ["run"],
            ["frobnicate"],
            ["verify", "--workload", "fig3a"],
        ],
    )
    def test_usage_errors(self, tmp_path, argv):
        assert cli(tmp_path, *argv) == EXIT_USAGE

    def test_parse_error_is_usage(self, tmp_path):
        path = tmp_path / "bad.workload"
        path.write_text("rank 0: teleport\n")
        assert cli(tmp_path, "run", "--workload", str(path)) == EXIT_USAGE

    def test_shipped(self, capsys):
        assert main(["workloads"]) == EXIT_OK
        names = capsys.readouterr().out.split()
        assert names == shipped_workloads()
        assert {"fig3a", "poisson", "lammps", "cyclic"} <= set(names)
        assert resolve_workload("fig3a").world_size == 7


class TestCompare:
    def test_empty_sweep(self, tmp_path, capsys):
        assert cli(tmp_path, "compare", "--workload", "barrier2", "--sweep", "0") == EXIT_OK
        assert "(empty sweep)" in capsys.readouterr().out
        assert json.loads((tmp_path / "compare.json").read_text()) == {}

    def test_barrier_heavy(self, tmp_path):
        assert cli(tmp_path, "compare", "--workload", "subgroups", "--sweep", "3", "--seeds", "2") == EXIT_OK
        records = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
        assert len(records) == 12
        for r in records:
            m = r["metrics"]
            assert m["protocol_messages_before_request"] == 0
            if r["protocol"] == "2pc":
                assert m["extra_sync_events"] >= m["blocking_collective_calls"]
            else:
                assert m["extra_sync_events"] == 0

    def test_errors_become_annotations(self, tmp_path):
        assert cli(tmp_path, "compare", "--workload", "nb_overlap", "--sweep", "2") == EXIT_OK
        table = json.loads((tmp_path / "compare.json").read_text())
        assert table["2pc"]["annotations"] == ["unsupported"]
        assert table["cc"]["annotations"] == []

    def test_p2p_heavy(self, tmp_path):
        assert cli(tmp_path, "compare", "--workload", "lammps", "--sweep", "3") == EXIT_OK
        table = json.loads((tmp_path / "compare.json").read_text())
        assert table["cc"]["protocol_messages_after_request"]["max"] <= 8
        assert table["cc"]["protocol_messages_before_request"]["max"] == 0


class TestVerify:
    def test_clean(self, tmp_path):
        assert cli(tmp_path, "verify", "--workload", "barrier2") == EXIT_OK
        data = json.loads((tmp_path / "verdict.json").read_text())
        assert len(data["explorations"]) == 3
        assert data["validator"]["verdict"] == "correct"

    @pytest.mark.parametrize("name", ["cyclic", "fig5"])
    def test_erroneous_programs(self, tmp_path, name):
        assert cli(tmp_path, "verify", "--workload", name) == EXIT_DEADLOCK
        data = json.loads((tmp_path / "verdict.json").read_text())
        assert data["validator"]["verdict"] == "erroneous"

    def test_bounds_zero(self, tmp_path):
        assert cli(tmp_path, "verify", "--workload", "barrier2", "--verify-bounds", "0") == EXIT_BOUNDED

    def test_naive_protocol_violates(self, tmp_path):
        assert cli(tmp_path, "verify", "--workload", "barrier2", "--protocol", "none", "--progress", "eager") == EXIT_VIOLATION

    def test_2pc_nonblocking(self, tmp_path):
        assert cli(tmp_path, "verify", "--workload", "nb_overlap", "--protocol", "2pc") == EXIT_UNSUPPORTED

    def test_aliasing(self, tmp_path):
        assert cli(tmp_path, "verify", "--workload", "aliasing", "--progress", "eager") == EXIT_VIOLATION
