"""Batch command surface: generate, evaluate, analyze, transfer, history, report.

One JSON config file with sections (providers, plan, outputs, plus one
section per analysis command) drives everything; ``--override key=value``
patches any existing config path before validation. The tool never prompts:
it validates, runs, writes files under the run directory and exits 0 iff
there was no validation error and at least one item succeeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import store
from .core import DatasetRecord, LanguagePair, MethodSpec, Trajectory
from .engine import RunPlan, RunResult, run_dataset
from .errors import MTBreakerError, ValidationError
from .harness import (
    annotate_records,
    data_quality_report,
    difficulty_history,
    evaluate_dataset,
    language_transfer_matrix,
    model_transfer_matrix,
    pareto_points,
    write_history_files,
    write_pareto_csv,
    write_quality_files,
    write_transfer_files,
)
from .providers import build_stack, load_provider_configs

log = logging.getLogger("mtbreaker")

EXIT_OK = 0
EXIT_NO_SUCCESS = 1
EXIT_VALIDATION = 2

COMMANDS = ("generate", "evaluate", "analyze", "transfer", "history", "report")


@dataclass(frozen=True)
class CommandInvocation:
    command: str
    config_path: Path
    out_dir: Path | None
    overrides: tuple[str, ...] = ()
    dry_run: bool = False
    resume: bool = False
    concurrency: int | None = None
    seed_file: Path | None = None
    verbosity: int = 0


# ---------------------------------------------------------------------------
# config plumbing


def load_config(path: Path) -> dict:
    if not path.exists():
        raise ValidationError(f"config file does not exist: {path}")
    try:
        config = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return config


def _parse_override(raw: str) -> tuple[str, object]:
    if "=" not in raw:
        raise ValidationError(f"override {raw!r} is not of the form key=value")
    key, _, value = raw.partition("=")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def apply_overrides(config: dict, overrides: tuple[str, ...]) -> dict:
    """Patch dotted paths into the config. Paths resolve from the config
    root; a path whose first segment is unknown is retried under "plan."
    (so ``method.steps=1`` reaches plan.method.steps). Unknown keys are
    validation errors."""
    defects = []
    for raw in overrides:
        key, value = _parse_override(raw)
        parts = key.split(".")
        if parts[0] not in config and "plan" in config and parts[0] in config["plan"]:
            parts = ["plan"] + parts
        node = config
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                defects.append(f"override {raw!r} references unknown key {part!r}")
                break
            node = node[part]
        else:
            if not isinstance(node, dict) or parts[-1] not in node:
                defects.append(f"override {raw!r} references unknown key {parts[-1]!r}")
            else:
                node[parts[-1]] = value
    if defects:
        raise ValidationError("; ".join(defects), defects=defects)
    return config


def read_seed_file(path: Path) -> tuple[str, ...]:
    """UTF-8 seeds, one source per line; blank lines are skipped."""
    if not path.exists():
        raise ValidationError(f"seeds file does not exist: {path}")
    lines = path.read_text("utf-8").splitlines()
    return tuple(line for line in lines if line.strip())


def plan_from_config(
    config: dict, invocation: CommandInvocation, config_dir: Path
) -> RunPlan:
    plan_section = config.get("plan")
    if not isinstance(plan_section, dict):
        raise ValidationError("config has no 'plan' section")
    if "method" not in plan_section:
        raise ValidationError("plan section has no 'method'")
    method = MethodSpec.from_dict(plan_section["method"])
    pairs = tuple(
        LanguagePair.from_dict(entry) for entry in plan_section.get("language_pairs", [])
    )
    seeds: tuple[str, ...] = ()
    seed_file = invocation.seed_file or plan_section.get("seeds_file")
    if seed_file:
        seed_path = Path(seed_file)
        if not seed_path.is_absolute():
            seed_path = config_dir / seed_path
        seeds = read_seed_file(seed_path)
    elif "seeds" in plan_section:
        seeds = tuple(plan_section["seeds"])
    return RunPlan(
        method=method,
        language_pairs=pairs,
        seeds=seeds,
        seed_length_policy=plan_section.get("seed_length_policy", "paired"),
        concurrency=invocation.concurrency or plan_section.get("concurrency", 8),
        parse_retry_budget=plan_section.get("parse_retry_budget", 2),
        history_window=plan_section.get("history_window", 50),
        item_count=plan_section.get("item_count"),
        seed_length=plan_section.get("seed_length"),
    )


def plan_to_dict(plan: RunPlan) -> dict:
    return {
        "method": plan.method.to_dict(),
        "language_pairs": [pair.to_dict() for pair in plan.language_pairs],
        "seeds": list(plan.seeds),
        "seed_length_policy": plan.seed_length_policy,
        "concurrency": plan.concurrency,
        "parse_retry_budget": plan.parse_retry_budget,
        "history_window": plan.history_window,
        "item_count": plan.item_count,
        "seed_length": plan.seed_length,
    }


def _build_stack(config: dict, invocation: CommandInvocation, config_dir: Path):
    entries = config.get("providers")
    if not isinstance(entries, list) or not entries:
        raise ValidationError("config has no 'providers' section")
    outputs = config.get("outputs", {})
    cache_dir = outputs.get("cache_dir")
    if cache_dir and not Path(cache_dir).is_absolute():
        cache_dir = str(config_dir / cache_dir)
    cache = store.cache_from_env(cache_dir)
    concurrency = invocation.concurrency or config.get("plan", {}).get("concurrency", 8)
    return build_stack(load_provider_configs(entries), cache=cache, concurrency=concurrency)


def _run_dir(config: dict, invocation: CommandInvocation, config_dir: Path) -> Path:
    outputs = config.get("outputs", {})
    base = invocation.out_dir or Path(outputs.get("dir", "runs"))
    if not base.is_absolute():
        base = config_dir / base
    run_id = outputs.get("run_id", "run")
    return base / run_id


def _load_records(run_dir: Path) -> list[DatasetRecord]:
    for name in ("records_annotated.jsonl", "records.jsonl"):
        path = run_dir / name
        if path.exists():
            return [
                DatasetRecord.from_json(line)
                for line in path.read_text("utf-8").splitlines()
                if line.strip()
            ]
    raise ValidationError(f"no records file under {run_dir}")


def _load_trajectories(run_dir: Path) -> list[Trajectory]:
    path = run_dir / "trajectories.jsonl"
    if not path.exists():
        raise ValidationError(f"no trajectories log under {run_dir}")
    entries = store.RunLog(path).load()
    trajectories = []
    for entry in entries:
        payload = {k: v for k, v in entry.items() if k not in ("schema", "item_index")}
        trajectories.append(Trajectory.from_dict(payload))
    return trajectories


def _records_by_pair(records: list[DatasetRecord]) -> dict[str, list[DatasetRecord]]:
    grouped: dict[str, list[DatasetRecord]] = {}
    for record in records:
        grouped.setdefault(record.language_pair.label, []).append(record)
    return grouped


def _section(config: dict, name: str) -> dict:
    section = config.get(name)
    if not isinstance(section, dict):
        raise ValidationError(f"config has no '{name}' section")
    return section


def _resolve_dir(config_dir: Path, raw: str) -> Path:
    path = Path(raw)
    return path if path.is_absolute() else config_dir / path


# ---------------------------------------------------------------------------
# commands


def cmd_generate(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    plan = plan_from_config(config, invocation, config_dir)
    defects = plan.validate()
    if defects:
        for defect in defects:
            print(f"validation error: {defect}", file=sys.stderr)
        return EXIT_VALIDATION

    if invocation.dry_run:
        print(json.dumps(plan_to_dict(plan), indent=2, sort_keys=True))
        return EXIT_OK

    stack = _build_stack(config, invocation, config_dir)
    run_dir = _run_dir(config, invocation, config_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    run_log = store.RunLog(run_dir / "trajectories.jsonl")
    if run_log.exists():
        log.info("existing trajectory log found; resuming completed items")

    result: RunResult = run_dataset(plan, stack, log=run_log)

    sources_path = run_dir / "sources.txt"
    sources_path.write_text(
        "".join(record.source.replace("\n", " ") + "\n" for record in result.records),
        "utf-8",
    )
    records_path = run_dir / "records.jsonl"
    records_path.write_text(
        "".join(record.to_json() + "\n" for record in result.records), "utf-8"
    )

    manifest = {
        "schema": 1,
        "run_id": run_dir.name,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "method": plan.method.to_dict(),
        "method_digest": store.digest_text(plan.method.digest_source()),
        "plan_digest": store.digest_text(store.canonical_json(plan_to_dict(plan))),
        "provider_ids": stack.provider_ids,
        "language_pairs": [pair.label for pair in plan.language_pairs],
        "planned_items": len(plan.items()),
        "completed_items": len(result.records),
        "failures": [{"item": i, "reason": r} for i, r in result.failures],
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", "utf-8")

    print(f"run directory: {run_dir}")
    print(f"completed {len(result.records)} of {len(plan.items())} items")
    if result.failures:
        print(f"failures ({len(result.failures)}):")
        for index, reason in result.failures:
            print(f"  item {index}: {reason}")
    return EXIT_OK if result.records else EXIT_NO_SUCCESS


def cmd_evaluate(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    section = _section(config, "evaluate")
    stack = _build_stack(config, invocation, config_dir)
    out_dir = _run_dir(config, invocation, config_dir)
    translator_id = section["translator"]
    scorer_ids = list(section["scorers"])

    summary = {}
    for raw_dir in section["runs"]:
        run_dir = _resolve_dir(config_dir, raw_dir)
        records = _load_records(run_dir)
        for pair_label, group in _records_by_pair(records).items():
            evaluation = evaluate_dataset(
                group, translator_id, scorer_ids, group[0].language_pair, stack
            )
            key = f"{run_dir.name}_{pair_label}"
            rows = [
                [position, "" if s is None else repr(s.combined)]
                + ["" if s is None else repr(s.per_scorer[sid]) for sid in scorer_ids]
                for position, s in enumerate(evaluation.scores)
            ]
            out_path = out_dir / f"evaluation_{key}.csv"
            header = ["item", "combined"] + list(scorer_ids)
            _write_rows(out_path, header, rows)
            summary[key] = {
                "mean": evaluation.mean,
                "items": len(group),
                "excluded": len(evaluation.excluded),
            }
            print(f"{key}: mean={evaluation.mean:.4f} excluded={len(evaluation.excluded)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "evaluation_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    return EXIT_OK


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_analyze(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    section = _section(config, "analyze")
    stack = _build_stack(config, invocation, config_dir)
    analyzer_id = section["analyzer"]
    translator_id = section["translator"]

    any_success = False
    for raw_dir in section["runs"]:
        run_dir = _resolve_dir(config_dir, raw_dir)
        records = _load_records(run_dir)
        annotated: list[DatasetRecord] = []
        failures: list[tuple[int, str]] = []
        for pair_label, group in _records_by_pair(records).items():
            done, failed = annotate_records(
                group,
                group[0].language_pair,
                stack,
                analyzer_id=analyzer_id,
                translator_id=translator_id,
            )
            annotated.extend(done)
            failures.extend(failed)
        out_path = run_dir / "records_annotated.jsonl"
        out_path.write_text("".join(r.to_json() + "\n" for r in annotated), "utf-8")
        annotated_count = sum(1 for r in annotated if r.analysis is not None)
        any_success = any_success or annotated_count > 0
        print(f"{run_dir.name}: annotated {annotated_count}/{len(annotated)} records")
        for index, reason in failures:
            print(f"  record {index}: {reason}")
    return EXIT_OK if any_success else EXIT_NO_SUCCESS


def cmd_transfer(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    section = _section(config, "transfer")
    stack = _build_stack(config, invocation, config_dir)
    out_dir = _run_dir(config, invocation, config_dir)
    datasets = {
        label: _load_records(_resolve_dir(config_dir, raw_dir))
        for label, raw_dir in section["datasets"].items()
    }
    scorer_ids = list(section["scorers"])
    axis = section.get("axis", "model")
    if axis == "model":
        pairs = [LanguagePair.from_dict(entry) for entry in section["language_pairs"]]
        matrix = model_transfer_matrix(
            datasets, list(section["eval_translators"]), pairs, scorer_ids, stack
        )
    elif axis == "language":
        pairs = {
            label: LanguagePair.from_dict(entry)
            for label, entry in section["language_pairs"].items()
        }
        matrix = language_transfer_matrix(
            datasets, pairs, list(section["eval_translators"]), scorer_ids, stack
        )
    else:
        raise ValidationError(f"unknown transfer axis {axis!r}")
    for path in write_transfer_files(matrix, out_dir):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_history(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    section = _section(config, "history")
    out_dir = _run_dir(config, invocation, config_dir)
    for raw_dir in section["runs"]:
        run_dir = _resolve_dir(config_dir, raw_dir)
        history = difficulty_history(_load_trajectories(run_dir))
        for path in write_history_files(history, out_dir / run_dir.name):
            print(f"wrote {path}")
    return EXIT_OK


def cmd_report(config: dict, invocation: CommandInvocation, config_dir: Path) -> int:
    section = _section(config, "report")
    stack = _build_stack(config, invocation, config_dir)
    out_dir = _run_dir(config, invocation, config_dir)
    scorer_ids = list(section["scorers"])

    reports = {}
    for label, raw_dir in section["datasets"].items():
        records = _load_records(_resolve_dir(config_dir, raw_dir))
        by_pair = _records_by_pair(records)
        if len(by_pair) != 1:
            raise ValidationError(
                f"dataset {label!r} spans {len(by_pair)} language pairs; "
                "report one pair per dataset"
            )
        ((_, group),) = by_pair.items()
        reports[label] = data_quality_report(
            group,
            group[0].language_pair,
            stack,
            translator_id=section["translator"],
            scorer_ids=scorer_ids,
            embedder_id=section["embedder"],
            source_scorer_id=section.get("source_scorer"),
        )
    for path in write_quality_files(reports, out_dir):
        print(f"wrote {path}")
    if len(reports) >= 2:
        points = pareto_points(reports)
        print(f"wrote {write_pareto_csv(points, out_dir / 'pareto.csv')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


_HANDLERS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "transfer": cmd_transfer,
    "history": cmd_history,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtbreaker",
        description="Forge and evaluate difficult-to-translate test sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        command = sub.add_parser(name)
        command.add_argument("--config", required=True, type=Path)
        command.add_argument("--out", type=Path, default=None)
        command.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE"
        )
        command.add_argument("--dry-run", action="store_true")
        command.add_argument("--resume", action="store_true")
        command.add_argument("--concurrency", type=int, default=None)
        command.add_argument("--seed-file", type=Path, default=None)
        command.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    invocation = CommandInvocation(
        command=args.command,
        config_path=args.config,
        out_dir=args.out,
        overrides=tuple(args.override),
        dry_run=args.dry_run,
        resume=args.resume,
        concurrency=args.concurrency,
        seed_file=args.seed_file,
        verbosity=args.verbose,
    )
    logging.basicConfig(
        level=logging.DEBUG if invocation.verbosity > 1 else
        logging.INFO if invocation.verbosity else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(invocation.config_path)
        config = apply_overrides(config, invocation.overrides)
        config_dir = invocation.config_path.resolve().parent
        return _HANDLERS[invocation.command](config, invocation, config_dir)
    except ValidationError as exc:
        for defect in exc.defects:
            print(f"validation error: {defect}", file=sys.stderr)
        return EXIT_VALIDATION
    except MTBreakerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
