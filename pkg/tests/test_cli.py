import json
import subprocess
import sys

import pytest

from procure.cli import main
from procure.harness import MechanismSpec, csv_body


def run_cli(args):
    return main(args)


class TestExperiment:
    def _config(self, tmp_path, output):
        config = {
            "dataset": "synthetic",
            "n": [20],
            "s": [1, 2],
            "instances": 4,
            "seed": 11,
            "mechanisms": ["alloc:greedy-margin", "alloc:cost-scaled", "vcg", "sealed:greedy-margin"],
            "vcg_cap": 12,
            "output": str(output),
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        return path

    def test_record_cardinality_and_determinism(self, tmp_path, capsys):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        cfg = self._config(tmp_path, out1)
        assert run_cli(["experiment", "--config", str(cfg)]) == 0
        assert run_cli(["experiment", "--config", str(cfg), "--output", str(out2)]) == 0
        body1, body2 = csv_body(str(out1)), csv_body(str(out2))
        assert body1 == body2
        rows = [l for l in out1.read_text().splitlines() if l and not l.startswith("#")]
        assert len(rows) - 1 == 2 * 4 * 4  # (s values) x instances x mechanisms

    def test_vcg_skipped_beyond_cap(self, tmp_path):
        out = tmp_path / "skip.csv"
        config = {
            "dataset": "synthetic", "n": [30], "s": [1], "instances": 2,
            "seed": 3, "mechanisms": ["vcg"], "vcg_cap": 12, "output": str(out),
        }
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(config))
        assert run_cli(["experiment", "--config", str(cfg)]) == 0
        text = out.read_text()
        assert "exhaustive-optimizer-cap:12" in text

    def test_no_timing_gives_byte_identical_files(self, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        cfg = self._config(tmp_path, out1)
        run_cli(["experiment", "--config", str(cfg), "--no-timing"])
        run_cli(["experiment", "--config", str(cfg), "--no-timing", "--output", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_worker_count_does_not_change_the_body(self, tmp_path):
        out1, out2 = tmp_path / "w1.csv", tmp_path / "w2.csv"
        cfg = self._config(tmp_path, out1)
        run_cli(["experiment", "--config", str(cfg), "--workers", "1"])
        run_cli(["experiment", "--config", str(cfg), "--workers", "2", "--output", str(out2)])
        assert csv_body(str(out1)) == csv_body(str(out2))


class TestVerify:
    def test_pass_exit_code(self, capsys):
        assert run_cli(["verify", "nas", "--trials", "5", "--seed", "3"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["passed"] is True

    def test_unknown_suite_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            run_cli(["verify", "bogus", "--trials", "5"])
        assert err.value.code == 2


class TestLowerbound:
    def test_report(self, capsys):
        assert run_cli(["lowerbound", "10"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["opt_welfare"] == 9.0
        assert doc["exact_oracle_welfare"] <= 2.0
        assert doc["cost_scaled_welfare"] >= 4.0

    def test_epsilon_precondition_usage_error(self, capsys):
        assert run_cli(["lowerbound", "10", "--epsilon", "0.5"]) == 2


class TestGenInstance:
    def test_random_instance_json(self, tmp_path, capsys):
        out = tmp_path / "inst.json"
        assert run_cli(["gen-instance", "--random", "5", "--seed", "3", "--output", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["instance"]["n_sets"] == 5
        assert len(doc["costs"]) == 5

    def test_graph_sampling(self, tmp_path):
        edges = tmp_path / "toy.txt"
        edges.write_text("# toy\n0 9\n1 9\n2 8\n")
        out = tmp_path / "inst.json"
        code = run_cli([
            "gen-instance", "--graph", str(edges), "--n", "2", "--s", "2", "--output", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["instance"]["n_sets"] == 2


class TestBench:
    def test_bench_rows(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        assert run_cli(["bench", "--n", "15", "40", "--rules", "greedy-margin", "distorted",
                        "--output", str(out)]) == 0
        lines = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
        header, rows = lines[0], lines[1:]
        assert "variant" in header
        naive = [r for r in rows if ",greedy-margin,naive," in r]
        lazy = [r for r in rows if ",greedy-margin,lazy," in r]
        assert len(naive) == len(lazy) == 2
        assert any(",distorted,naive," in r for r in rows)


class TestOrderAndScheduleSelectors:
    def test_named_orders(self, tmp_path):
        from procure.online import named_order

        assert named_order("identity", 3) == (0, 1, 2)
        assert named_order("reverse", 3) == (2, 1, 0)
        assert sorted(named_order("random:5", 6)) == list(range(6))
        perm = tmp_path / "order.txt"
        perm.write_text("2\n0\n1\n")
        assert named_order(f"file:{perm}", 3) == (2, 0, 1)
        with pytest.raises(ValueError):
            named_order("sideways", 3)

    def test_named_schedules(self, tmp_path):
        from procure.descending import (
            AdversarialFamilySchedule,
            LexicographicSchedule,
            RoundRobinSchedule,
            ScriptedSchedule,
            named_schedule,
        )

        assert isinstance(named_schedule("lex", 4), LexicographicSchedule)
        assert isinstance(named_schedule("rr", 4), RoundRobinSchedule)
        assert isinstance(named_schedule("adversarial-family", 5), AdversarialFamilySchedule)
        script = tmp_path / "sched.txt"
        script.write_text("1\n0\n")
        assert isinstance(named_schedule(f"scripted:{script}", 2), ScriptedSchedule)
        with pytest.raises(ValueError):
            named_schedule("chaotic", 4)

    def test_experiment_with_posted_and_da(self, tmp_path):
        out = tmp_path / "mix.csv"
        config = {
            "dataset": "synthetic", "n": [8], "s": [2], "instances": 3, "seed": 5,
            "mechanisms": ["posted:cost-scaled", "da:cost-scaled", "da:exact", "opt"],
            "arrival_order": "reverse", "da_schedule": "rr", "vcg_cap": 12,
            "output": str(out),
        }
        cfg = tmp_path / "m.json"
        cfg.write_text(json.dumps(config))
        assert run_cli(["experiment", "--config", str(cfg)]) == 0
        rows = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
        assert len(rows) - 1 == 3 * 4

    def test_trace_flag_writes_jsonl(self, tmp_path):
        out = tmp_path / "traced.csv"
        config = {
            "dataset": "synthetic", "n": [6], "s": [1], "instances": 2, "seed": 5,
            "mechanisms": ["alloc:greedy-margin", "sealed:cost-scaled"],
            "output": str(out),
        }
        cfg = tmp_path / "t.json"
        cfg.write_text(json.dumps(config))
        assert run_cli(["experiment", "--config", str(cfg), "--trace"]) == 0
        lines = (tmp_path / "traced.csv.traces.jsonl").read_text().splitlines()
        assert len(lines) == 4
        doc = json.loads(lines[0])
        assert doc["trace"]["tentative_sets"][0] == []


def test_mechanism_spec_validation():
    assert MechanismSpec.parse("sealed:roi").rule == "roi"
    assert MechanismSpec.parse("vcg").rule is None
    with pytest.raises(ValueError):
        MechanismSpec.parse("sealed:nonsense")
    with pytest.raises(ValueError):
        MechanismSpec.parse("posted:distorted")
    with pytest.raises(ValueError):
        MechanismSpec.parse("teleport")


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "procure.cli", "verify", "nas", "--trials", "3", "--seed", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
