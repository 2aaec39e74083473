"""CLI surface: subcommands, exit codes, determinism end to end."""

from __future__ import annotations

import io
import json
from pathlib import Path

import pytest

from evojudge.cli import main
from evojudge.runstore import log_hash
from stub_server import StubEndpoint

TOY_INSTRUCTION = "Write the status note."


@pytest.fixture()
def task_file(tmp_path) -> Path:
    path = tmp_path / "task.txt"
    path.write_text(TOY_INSTRUCTION, encoding="utf-8")
    return path


def gateway_config(tmp_path, base_url: str) -> Path:
    config = tmp_path / "config.toml"
    config.write_text(
        "\n".join(
            [
                "[gateway]",
                f'base_url = "{base_url}"',
                'api_key = "test-key"',
                "",
                "[agents.decomposer]",
                'model = "stub-model"',
                "",
                "[agents.creator]",
                'model = "stub-model"',
                "",
                "[agents.judge]",
                'model = "stub-model"',
            ]
        ),
        encoding="utf-8",
    )
    return config


class TestDecompose:
    def test_llm_path_against_stub_endpoint(self, tmp_path, task_file, capsys):
        items = [
            {"id": "r1", "assertion": "Is the chart a scatter plot?", "prerequisites": []},
            {"id": "r2", "assertion": "Does the title exist?", "prerequisites": []},
            {"id": "r3", "assertion": "Is the legend readable?", "prerequisites": []},
        ]
        reply = "```json\n" + json.dumps(items) + "\n```"
        with StubEndpoint([{"text": reply, "prompt_tokens": 5, "completion_tokens": 9}]) as stub:
            config = gateway_config(tmp_path, stub.base_url)
            code = main(["decompose", "--instruction", str(task_file), "--config", str(config)])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["k"] == 3
        assert [r["id"] for r in data["requirements"]] == ["r1", "r2", "r3"]

    def test_sim_path(self, task_file, capsys):
        code = main(["decompose", "--instruction", str(task_file), "--sim", "toy"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["k"] == 8

    def test_empty_instruction_is_usage_error(self, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("   ", encoding="utf-8")
        assert main(["decompose", "--instruction", str(empty), "--sim", "toy"]) == 2

    def test_stdin_dash(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO("decompose me"))
        assert main(["decompose", "--instruction", "-", "--sim", "toy"]) == 0
        assert json.loads(capsys.readouterr().out)["k"] == 8

    def test_unknown_flag_exits_2(self, task_file, capsys):
        assert main(["decompose", "--instruction", str(task_file), "--frobnicate"]) == 2


class TestEvolve:
    def test_sim_run_writes_report_with_monotone_curve(self, tmp_path, task_file, capsys):
        out = tmp_path / "run"
        code = main(
            ["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy", "--seed", "42"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        curve = report["best_fitness_curve"]
        assert all(b >= a for a, b in zip(curve, curve[1:]))
        assert (out / "run.jsonl").is_file()
        assert (out / "config.snapshot.json").is_file()

    def test_max_gen_zero_is_initial_population_only(self, tmp_path, task_file):
        out = tmp_path / "run"
        code = main(
            ["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy",
             "--seed", "7", "--max-gen", "0"]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["generations_executed"] == 0
        assert len(report["best_fitness_curve"]) == 1

    def test_odd_population_is_usage_error(self, tmp_path, task_file):
        code = main(
            ["evolve", "--task", str(task_file), "--out", str(tmp_path / "r"), "--sim", "toy",
             "--pop", "3"]
        )
        assert code == 2

    def test_existing_run_dir_refused(self, tmp_path, task_file):
        out = tmp_path / "run"
        assert main(["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy"]) == 0
        assert main(["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy"]) == 2

    def test_same_seed_same_stripped_hash(self, tmp_path, task_file):
        for name in ("a", "b"):
            code = main(
                ["evolve", "--task", str(task_file), "--out", str(tmp_path / name),
                 "--sim", "toy", "--seed", "11"]
            )
            assert code == 0
        assert log_hash(tmp_path / "a") == log_hash(tmp_path / "b")

    def test_ablate_feedback_records_score_only(self, tmp_path, task_file):
        out = tmp_path / "run"
        code = main(
            ["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy",
             "--seed", "5", "--ablate-feedback"]
        )
        assert code == 0
        events = [
            json.loads(line) for line in (out / "run.jsonl").read_text(encoding="utf-8").splitlines()
        ]
        modes = {e["payload"]["mode"] for e in events if e["kind"] == "mutated"}
        assert modes == {"score_only"}


class TestJudge:
    def test_sim_judge_artifact(self, tmp_path, capsys):
        artifact = tmp_path / "artifact.txt"
        artifact.write_text("draft alpha bravo charlie echo-7 foxtrot 42", encoding="utf-8")
        code = main(["judge", "--artifact", str(artifact), "--sim", "toy"])
        assert code == 0
        data = json.loads(capsys.readouterr().out)
        assert data["scores"] == [1, 1, 1, 1, 1, 1, 1, 1]
        assert data["fitness"] == 1.0

    def test_missing_requirements_and_sim_is_usage_error(self, tmp_path):
        artifact = tmp_path / "artifact.txt"
        artifact.write_text("text", encoding="utf-8")
        assert main(["judge", "--artifact", str(artifact)]) == 2


class TestStability:
    def test_simulated_default_scenario_negative_r(self, tmp_path, capsys):
        out = tmp_path / "stab"
        code = main(["stability", "--simulate", "stability", "--out", str(out), "--seed", "42"])
        assert code == 0
        data = json.loads((out / "stability_report.json").read_text(encoding="utf-8"))
        assert data["r"] < 0
        assert (out / "scores.csv").is_file()

    def test_zero_noise_scenario_flags_degenerate(self, tmp_path):
        scenario = {
            "name": "quiet",
            "rules": [
                {"id": "r1", "kind": "contains", "needle": "aa"},
                {"id": "r2", "kind": "contains", "needle": "bb"},
            ],
            "noise": {"eps_sat": 0.0, "eps_unsat": 0.0},
            "stability": {"cases": 4, "repeats": 3},
        }
        path = tmp_path / "quiet.json"
        path.write_text(json.dumps(scenario), encoding="utf-8")
        out = tmp_path / "stab"
        code = main(["stability", "--simulate", str(path), "--out", str(out)])
        assert code == 0
        data = json.loads((out / "stability_report.json").read_text(encoding="utf-8"))
        assert data["degenerate_correlation"] is True
        assert data["r"] is None

    def test_csv_input_matches_component_oracles(self, tmp_path):
        from oracles import icc_1_1_oracle, pearson_oracle, sample_std_oracle

        rows = [
            [0.2, 0.4, 0.3],
            [0.9, 0.85, 0.95],
            [0.5, 0.7, 0.3],
            [0.1, 0.0, 0.35],
        ]
        lines = ["case_id,repeat,score"]
        for i, row in enumerate(rows):
            for t, v in enumerate(row):
                lines.append(f"case-{i},{t},{v}")
        csv_path = tmp_path / "scores.csv"
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        out = tmp_path / "stab"
        code = main(["stability", "--input", str(csv_path), "--out", str(out)])
        assert code == 0
        data = json.loads((out / "stability_report.json").read_text(encoding="utf-8"))
        means = [sum(r) / 3 for r in rows]
        stds = [sample_std_oracle(r) for r in rows]
        r_expected, p_expected = pearson_oracle(means, stds)
        assert data["r"] == pytest.approx(r_expected, abs=1e-9)
        assert data["p"] == pytest.approx(p_expected, abs=1e-6)
        assert data["icc_1_1"] == pytest.approx(icc_1_1_oracle(rows), abs=1e-9)

    def test_missing_csv_is_usage_error(self, tmp_path):
        assert main(["stability", "--input", str(tmp_path / "nope.csv")]) == 2


class TestReportReplay:
    def run_once(self, tmp_path, task_file) -> Path:
        out = tmp_path / "run"
        assert main(
            ["evolve", "--task", str(task_file), "--out", str(out), "--sim", "toy", "--seed", "42"]
        ) == 0
        return out

    def test_clean_replay_exits_zero(self, tmp_path, task_file, capsys):
        out = self.run_once(tmp_path, task_file)
        assert main(["replay", "--run", str(out)]) == 0
        assert "verdict: clean" in capsys.readouterr().out

    def test_corrupted_log_exits_one_and_names_violation(self, tmp_path, task_file, capsys):
        out = self.run_once(tmp_path, task_file)
        path = out / "run.jsonl"
        lines = path.read_text(encoding="utf-8").splitlines()
        patched = []
        for line in lines:
            event = json.loads(line)
            if event["kind"] == "run_end":
                event["payload"]["best_fitness"] = 0.01
            patched.append(json.dumps(event, sort_keys=True, separators=(",", ":")))
        path.write_text("\n".join(patched) + "\n", encoding="utf-8")
        assert main(["replay", "--run", str(out)]) == 1
        assert "best fitness" in capsys.readouterr().out

    def test_missing_run_dir_exits_two(self, tmp_path):
        assert main(["replay", "--run", str(tmp_path / "missing")]) == 2
        assert main(["report", "--run", str(tmp_path / "missing")]) == 2

    def test_report_prints_metrics(self, tmp_path, task_file, capsys):
        out = self.run_once(tmp_path, task_file)
        assert main(["report", "--run", str(out)]) == 0
        text = capsys.readouterr().out
        assert "best fitness" in text
        assert "requirements met" in text
