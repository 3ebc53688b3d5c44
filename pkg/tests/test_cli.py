from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from mtbreaker.cli import EXIT_NO_SUCCESS, EXIT_OK, EXIT_VALIDATION, main
from mtbreaker.store import RunLog

SEEDS = [
    "The quick brown fox jumps over the dog",
    "Another one has been found today",
    "Going back up tomorrow morning friends",
    "It is what it certainly is",
]

PROVIDERS = [
    {"id": "gen", "kind": "generator", "adapter": "mock:adversarial"},
    {"id": "analyst", "kind": "generator", "adapter": "mock:analyst"},
    {"id": "mt", "kind": "translator", "adapter": "mock:uppercase"},
    {"id": "mt2", "kind": "translator", "adapter": "mock:uppercase",
     "options": {"drop_marker": "@m2@"}},
    {"id": "qe", "kind": "quality_scorer", "adapter": "mock:marker"},
    {"id": "srcqe", "kind": "source_scorer", "adapter": "mock:marker"},
    {"id": "embd", "kind": "embedder", "adapter": "mock:letterhist"},
]


def base_config(tmp_path: Path, **sections) -> Path:
    (tmp_path / "seeds.txt").write_text("\n".join(SEEDS) + "\n", "utf-8")
    config = {
        "providers": PROVIDERS,
        "plan": {
            "method": {
                "name": "mtbreaker", "steps": 3, "seeded": True,
                "target_translators": ["mt"], "scorers": ["qe"], "generator": "gen",
            },
            "language_pairs": [{"source_lang": "English", "target_lang": "Czech"}],
            "seeds_file": "seeds.txt",
            "concurrency": 4,
        },
        "outputs": {"dir": "runs", "run_id": "demo", "cache_dir": "cache"},
    }
    config.update(sections)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=2), "utf-8")
    return path


class TestGenerate:
    def test_sources_end_with_three_markers(self, tmp_path):
        config = base_config(tmp_path)
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        sources = (tmp_path / "runs" / "demo" / "sources.txt").read_text().splitlines()
        assert len(sources) == 4
        assert all(line.endswith("@@ @@ @@") for line in sources)

    def test_override_steps_shortens_trajectories(self, tmp_path):
        config = base_config(tmp_path)
        assert main([
            "generate", "--config", str(config), "--override", "method.steps=1",
        ]) == EXIT_OK
        entries = RunLog(tmp_path / "runs" / "demo" / "trajectories.jsonl").load()
        assert all(len(e["steps"]) == 2 for e in entries)

    def test_missing_seed_file_names_path(self, tmp_path, capsys):
        config = base_config(tmp_path)
        (tmp_path / "seeds.txt").unlink()
        assert main(["generate", "--config", str(config)]) == EXIT_VALIDATION
        assert "seeds.txt" in capsys.readouterr().err

    def test_dry_run_prints_plan_and_calls_nothing(self, tmp_path, capsys):
        config = base_config(tmp_path)
        # poison the provider section: building it would fail, so a passing
        # dry run proves no provider was constructed or called
        raw = json.loads(config.read_text())
        raw["providers"] = [{"id": "gen", "kind": "generator",
                             "adapter": "mock:scripted",
                             "options": {"replies_file": "does-not-exist.json"}}]
        config.write_text(json.dumps(raw), "utf-8")
        assert main([
            "generate", "--config", str(config), "--dry-run",
            "--override", "method.steps=7",
        ]) == EXIT_OK
        plan = json.loads(capsys.readouterr().out)
        assert plan["method"]["steps"] == 7
        assert len(plan["seeds"]) == 4
        assert not (tmp_path / "runs").exists()

    def test_manifest_written(self, tmp_path):
        config = base_config(tmp_path)
        main(["generate", "--config", str(config)])
        manifest = json.loads((tmp_path / "runs" / "demo" / "manifest.json").read_text())
        assert manifest["planned_items"] == 4
        assert manifest["completed_items"] == 4
        assert "gen" in manifest["provider_ids"]

    def test_unknown_override_is_validation_error(self, tmp_path, capsys):
        config = base_config(tmp_path)
        assert main([
            "generate", "--config", str(config), "--override", "method.warp=9",
        ]) == EXIT_VALIDATION
        assert "warp" in capsys.readouterr().err

    def test_all_items_failing_exits_one(self, tmp_path):
        config = base_config(tmp_path)
        raw = json.loads(config.read_text())
        raw["providers"][0] = {
            "id": "gen", "kind": "generator", "adapter": "mock:scripted",
            "options": {"replies": ["never a span"] * 100},
        }
        raw["plan"]["method"]["seeded"] = False
        raw["plan"]["method"]["steps"] = 1
        config.write_text(json.dumps(raw), "utf-8")
        assert main(["generate", "--config", str(config)]) == EXIT_NO_SUCCESS

    def test_invalid_config_json(self, tmp_path, capsys):
        config = tmp_path / "broken.json"
        config.write_text("{not json", "utf-8")
        assert main(["generate", "--config", str(config)]) == EXIT_VALIDATION

    def test_missing_config(self, tmp_path):
        assert main([
            "generate", "--config", str(tmp_path / "absent.json"),
        ]) == EXIT_VALIDATION


@pytest.fixture
def generated(tmp_path) -> Path:
    config = base_config(
        tmp_path,
        evaluate={"runs": ["runs/demo"], "translator": "mt", "scorers": ["qe"]},
        analyze={"runs": ["runs/demo"], "analyzer": "analyst", "translator": "mt"},
        history={"runs": ["runs/demo"]},
        report={
            "datasets": {"mtbreaker": "runs/demo"},
            "translator": "mt", "scorers": ["qe"], "embedder": "embd",
            "source_scorer": "srcqe",
        },
        transfer={
            "axis": "model",
            "datasets": {"mtbreaker": "runs/demo", "Seeds": "runs/seeds"},
            "eval_translators": ["mt", "mt2"],
            "scorers": ["qe"],
            "language_pairs": [{"source_lang": "English", "target_lang": "Czech"}],
        },
    )
    assert main(["generate", "--config", str(config)]) == EXIT_OK
    # a second run with the seeds baseline method for the transfer test
    raw = json.loads(config.read_text())
    raw["plan"]["method"] = {
        "name": "seeds", "seeded": True,
        "target_translators": ["mt"], "scorers": ["qe"], "generator": "gen",
    }
    raw["outputs"]["run_id"] = "seeds"
    seeds_config = tmp_path / "seeds_config.json"
    seeds_config.write_text(json.dumps(raw), "utf-8")
    assert main(["generate", "--config", str(seeds_config)]) == EXIT_OK
    return config


class TestAnalysisCommands:
    def test_evaluate(self, generated, tmp_path):
        assert main(["evaluate", "--config", str(generated)]) == EXIT_OK
        summary = json.loads(
            (tmp_path / "runs" / "demo" / "evaluation_summary.json").read_text()
        )
        assert summary["demo_English-Czech"]["mean"] == 40.0

    def test_analyze_then_report(self, generated, tmp_path):
        assert main(["analyze", "--config", str(generated)]) == EXIT_OK
        annotated = (tmp_path / "runs" / "demo" / "records_annotated.jsonl")
        assert annotated.exists()
        assert main(["report", "--config", str(generated)]) == EXIT_OK
        table = (tmp_path / "runs" / "demo" / "data_quality.txt").read_text()
        assert "Diversity (embd)" in table

    def test_history_mean_non_increasing(self, generated, tmp_path):
        assert main(["history", "--config", str(generated)]) == EXIT_OK
        rows = list(csv.reader(
            (tmp_path / "runs" / "demo" / "demo" / "history_cummin.csv")
            .read_text().splitlines()
        ))
        means = [float(r[1]) for r in rows[1:]]
        assert means == sorted(means, reverse=True)

    def test_transfer_with_seeds_row(self, generated, tmp_path):
        assert main(["transfer", "--config", str(generated)]) == EXIT_OK
        rows = list(csv.reader(
            (tmp_path / "runs" / "demo" / "transfer_model.csv").read_text().splitlines()
        ))
        assert rows[0] == ["dataset", "mt", "mt2"]
        by_label = {r[0]: r[1:] for r in rows[1:]}
        assert set(by_label) == {"mtbreaker", "Seeds"}
        # seeds are clean, mtbreaker sources carry three markers
        assert [float(x) for x in by_label["Seeds"]] == [100.0, 100.0]
        assert all(float(x) == 40.0 for x in by_label["mtbreaker"])

    def test_report_without_section_fails(self, tmp_path):
        config = base_config(tmp_path)
        assert main(["report", "--config", str(config)]) == EXIT_VALIDATION

    def test_language_axis_transfer(self, tmp_path):
        config = base_config(
            tmp_path,
            transfer={
                "axis": "language",
                "datasets": {"encs": "runs/demo", "other": "runs/demo"},
                "eval_translators": ["mt"],
                "scorers": ["qe"],
                "language_pairs": {
                    "encs": {"source_lang": "English", "target_lang": "Czech"},
                    "ende": {"source_lang": "English", "target_lang": "German"},
                },
            },
        )
        assert main(["generate", "--config", str(config)]) == EXIT_OK
        assert main(["transfer", "--config", str(config)]) == EXIT_OK
        rows = list(csv.reader(
            (tmp_path / "runs" / "demo" / "transfer_language.csv").read_text().splitlines()
        ))
        assert rows[0] == ["dataset", "encs", "ende"]


class TestFlags:
    def test_out_flag_redirects_run_dir(self, tmp_path):
        config = base_config(tmp_path)
        out = tmp_path / "elsewhere"
        assert main(["generate", "--config", str(config), "--out", str(out)]) == EXIT_OK
        assert (out / "demo" / "sources.txt").exists()

    def test_seed_file_flag_overrides_config(self, tmp_path):
        config = base_config(tmp_path)
        other = tmp_path / "other_seeds.txt"
        other.write_text("lone seed line\n", "utf-8")
        assert main([
            "generate", "--config", str(config), "--seed-file", str(other),
        ]) == EXIT_OK
        sources = (tmp_path / "runs" / "demo" / "sources.txt").read_text().splitlines()
        assert len(sources) == 1
        assert sources[0].startswith("lone seed line")

    def test_default_steps_for_breaking_method(self, tmp_path, capsys):
        config = base_config(tmp_path)
        raw = json.loads(config.read_text())
        del raw["plan"]["method"]["steps"]
        config.write_text(json.dumps(raw), "utf-8")
        assert main(["generate", "--config", str(config), "--dry-run"]) == EXIT_OK
        plan = json.loads(capsys.readouterr().out)
        assert plan["method"]["steps"] == 10
