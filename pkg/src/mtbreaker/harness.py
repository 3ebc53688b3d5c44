"""Dataset-level evaluation: difficulty, data-quality reports, difficulty-
history curves, diversity/difficulty Pareto points and transfer matrices.

Items whose evaluation fails are excluded from means (never zero-scored) and
the exclusion count is always reported. When a table is averaged over several
models or languages, per-(model, language) means are computed first and then
averaged.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .core import (
    DatasetRecord,
    LanguagePair,
    ScoreSet,
    Trajectory,
    combine_scores,
    trajectory_difficulty,
)
from .errors import MTBreakerError, ParseError, ValidationError
from .metrics import (
    ChrfParams,
    DEFAULT_CHRF,
    format_decimal,
    length_stats,
    mean_ci_t,
    pairwise_diversity_chrf,
    pairwise_diversity_embedding,
    unique_count,
    vocab_size,
    z_normalize,
)
from .prompts import (
    ANALYSIS_REMINDER,
    parse_source_analysis,
    parse_target_analysis,
    render_source_analysis,
    render_target_analysis,
)
from .providers.base import ChatMessage
from .providers.stack import ProviderStack

CI_LEVEL = 0.90
DIVERSITY_MEASURES = ("embd", "chrf", "topics", "errors", "words")


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _sample_variance(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    mean = _mean(values)
    return math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)


# ---------------------------------------------------------------------------
# dataset evaluation


@dataclass(frozen=True)
class EvaluationResult:
    """Per-item scores of one dataset against one translator."""

    scores: tuple[ScoreSet | None, ...]
    mean: float
    excluded: tuple[tuple[int, str], ...]

    @property
    def included_count(self) -> int:
        return sum(1 for s in self.scores if s is not None)

    @property
    def exclusion_fraction(self) -> float:
        return len(self.excluded) / len(self.scores)


def evaluate_dataset(
    records: list[DatasetRecord],
    translator_id: str,
    scorer_ids: list[str],
    pair: LanguagePair,
    stack: ProviderStack,
    concurrency: int = 8,
) -> EvaluationResult:
    """Translate every final source with one translator and score it with all
    scorers; returns per-item combined scores and their mean."""
    if not records:
        raise ValidationError("evaluate_dataset needs at least one record")

    def score_one(record: DatasetRecord) -> ScoreSet:
        translation = stack.translate(translator_id, record.source, pair)
        return combine_scores(
            {
                scorer_id: stack.score_quality(scorer_id, record.source, translation, pair)
                for scorer_id in scorer_ids
            }
        )

    results: list[ScoreSet | None] = [None] * len(records)
    excluded: list[tuple[int, str]] = []

    def run(position: int) -> None:
        try:
            results[position] = score_one(records[position])
        except MTBreakerError as exc:
            excluded.append((position, f"{type(exc).__name__}: {exc}"))

    if concurrency > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            list(pool.map(run, range(len(records))))
    else:
        for position in range(len(records)):
            run(position)

    included = [s.combined for s in results if s is not None]
    if not included:
        raise ValidationError(
            f"every item failed evaluation against {translator_id!r}: "
            + "; ".join(reason for _, reason in excluded)
        )
    return EvaluationResult(
        scores=tuple(results),
        mean=_mean(included),
        excluded=tuple(sorted(excluded)),
    )


# ---------------------------------------------------------------------------
# transfer matrices


@dataclass(frozen=True)
class TransferMatrix:
    """Mean difficulty of row-targeted datasets evaluated on column targets."""

    axis: str  # "model" or "language"
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: dict[tuple[str, str], float]
    counts: dict[tuple[str, str], int]

    def __post_init__(self) -> None:
        expected = {(r, c) for r in self.rows for c in self.columns}
        if set(self.cells) != expected or set(self.counts) != expected:
            raise ValidationError("transfer matrix is not rectangular")
        if any(count <= 0 for count in self.counts.values()):
            raise ValidationError("every transfer cell needs at least one scored item")

    def cell(self, row: str, column: str) -> float:
        return self.cells[(row, column)]


def _check_matrix_shape(datasets: dict, eval_targets: list) -> None:
    if len(datasets) < 2:
        raise ValidationError(f"transfer matrix needs >= 2 rows, got {len(datasets)}")
    if len(eval_targets) < 2:
        raise ValidationError(f"transfer matrix needs >= 2 columns, got {len(eval_targets)}")
    for label, records in datasets.items():
        if not records:
            raise ValidationError(f"dataset for row {label!r} is missing or empty")


def model_transfer_matrix(
    datasets: dict[str, list[DatasetRecord]],
    translator_ids: list[str],
    pairs: list[LanguagePair],
    scorer_ids: list[str],
    stack: ProviderStack,
) -> TransferMatrix:
    """Rows: datasets optimized against one model (plus optional baselines
    such as a Seeds row); columns: evaluation translators. Cell means average
    per language pair first, then across pairs."""
    _check_matrix_shape(datasets, translator_ids)
    if not pairs:
        raise ValidationError("model transfer needs at least one language pair")
    cells: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for row_label, records in datasets.items():
        for translator_id in translator_ids:
            per_pair = [
                evaluate_dataset(records, translator_id, scorer_ids, pair, stack)
                for pair in pairs
            ]
            cells[(row_label, translator_id)] = _mean([e.mean for e in per_pair])
            counts[(row_label, translator_id)] = sum(e.included_count for e in per_pair)
    return TransferMatrix(
        axis="model",
        rows=tuple(datasets),
        columns=tuple(translator_ids),
        cells=cells,
        counts=counts,
    )


def language_transfer_matrix(
    datasets: dict[str, list[DatasetRecord]],
    pairs: dict[str, LanguagePair],
    translator_ids: list[str],
    scorer_ids: list[str],
    stack: ProviderStack,
) -> TransferMatrix:
    """Rows: datasets optimized for one language pair; columns: the pairs the
    sources are re-evaluated on. Cell means average per translator first."""
    _check_matrix_shape(datasets, list(pairs))
    if not translator_ids:
        raise ValidationError("language transfer needs at least one translator")
    cells: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for row_label, records in datasets.items():
        for column_label, pair in pairs.items():
            per_translator = [
                evaluate_dataset(records, translator_id, scorer_ids, pair, stack)
                for translator_id in translator_ids
            ]
            cells[(row_label, column_label)] = _mean([e.mean for e in per_translator])
            counts[(row_label, column_label)] = sum(e.included_count for e in per_translator)
    return TransferMatrix(
        axis="language",
        rows=tuple(datasets),
        columns=tuple(pairs),
        cells=cells,
        counts=counts,
    )


# ---------------------------------------------------------------------------
# difficulty history


@dataclass(frozen=True)
class StepSummary:
    mean: float | None
    lo: float | None
    hi: float | None
    variance: float | None
    count: int


@dataclass(frozen=True)
class DifficultyHistory:
    """Per-step difficulty development across a batch of trajectories.

    ``cumulative_min`` tracks the running best (lowest) score up to each
    step, i.e. what selection would pick so far; ``per_step`` tracks the raw
    score at each step without selection. Bounds are 90% t-intervals and are
    omitted when fewer than two trajectories contribute.
    """

    cumulative_min: tuple[StepSummary, ...]
    per_step: tuple[StepSummary, ...]
    pooled_variance: float | None


def _summarize(values: list[float]) -> StepSummary:
    if not values:
        return StepSummary(mean=None, lo=None, hi=None, variance=None, count=0)
    if len(values) == 1:
        return StepSummary(mean=values[0], lo=None, hi=None, variance=None, count=1)
    mean, lo, hi = mean_ci_t(values, CI_LEVEL)
    return StepSummary(
        mean=mean, lo=lo, hi=hi, variance=_sample_variance(values), count=len(values)
    )


def difficulty_history(trajectories: list[Trajectory]) -> DifficultyHistory:
    if not trajectories:
        raise ValidationError("difficulty_history needs at least one trajectory")
    lengths = {len(t.steps) for t in trajectories}
    if len(lengths) != 1:
        raise ValidationError(
            f"trajectories must share the same step count, got {sorted(lengths)}"
        )
    step_count = lengths.pop()

    running: list[list[float]] = [[] for _ in range(step_count)]
    raw: list[list[float]] = [[] for _ in range(step_count)]
    for trajectory in trajectories:
        best: float | None = None
        for position, step in enumerate(trajectory.steps):
            if not step.failed:
                value = trajectory_difficulty(step)
                raw[position].append(value)
                best = value if best is None else min(best, value)
            if best is None:
                raise ValidationError(
                    "cumulative minimum undefined: trajectory starts with a failed step"
                )
            running[position].append(best)

    pooled = [value for column in raw for value in column]
    return DifficultyHistory(
        cumulative_min=tuple(_summarize(column) for column in running),
        per_step=tuple(_summarize(column) for column in raw),
        pooled_variance=_sample_variance(pooled),
    )


# ---------------------------------------------------------------------------
# data-quality report


@dataclass(frozen=True)
class DiversityReport:
    embd: float
    chrf: float
    topics: int
    errors: int
    words: int

    def __post_init__(self) -> None:
        if min(self.topics, self.errors, self.words) < 0:
            raise ValidationError("diversity counts must be >= 0")

    def measure(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass(frozen=True)
class DataQualityReport:
    """Every data-quality row for one method/dataset: five diversity rows,
    six complexity & style rows, then the quality-estimation rows."""

    diversity: DiversityReport
    grammaticality: float | None
    naturalness: float | None
    word_rarity: float | None
    syntax_complexity: float | None
    avg_word_count: float
    avg_word_length: float
    qe: dict[str, float]
    qe_combined: float
    srcqe: float | None
    item_count: int
    analysis_coverage: float
    missing_analyses: tuple[int, ...]
    qe_excluded: int


def data_quality_report(
    records: list[DatasetRecord],
    pair: LanguagePair,
    stack: ProviderStack,
    *,
    translator_id: str,
    scorer_ids: list[str],
    embedder_id: str,
    source_scorer_id: str | None = None,
    chrf_params: ChrfParams = DEFAULT_CHRF,
) -> DataQualityReport:
    """Assemble the full data-quality table for one dataset.

    Records without analysis annotations are listed and the style means are
    computed over the covered subset, with the coverage fraction attached.
    """
    if len(records) < 2:
        raise ValidationError("a data-quality report needs at least 2 records")
    texts = [record.source for record in records]

    embeddings = [stack.embed(embedder_id, text) for text in texts]
    analyses = [record.analysis for record in records]
    covered = [a for a in analyses if a is not None]
    missing = tuple(i for i, a in enumerate(analyses) if a is None)
    error_mode_lists = [list(r.error_modes) for r in records if r.error_modes is not None]

    diversity = DiversityReport(
        embd=pairwise_diversity_embedding(embeddings),
        chrf=pairwise_diversity_chrf(texts, chrf_params),
        topics=unique_count([list(a.topics) for a in covered], fold=True),
        errors=unique_count(error_mode_lists, fold=True),
        words=vocab_size(texts),
    )

    avg_word_count, avg_word_length = length_stats(texts)

    evaluation = evaluate_dataset(records, translator_id, scorer_ids, pair, stack)
    per_scorer_means = {
        scorer_id: _mean(
            [s.per_scorer[scorer_id] for s in evaluation.scores if s is not None]
        )
        for scorer_id in scorer_ids
    }

    srcqe = None
    if source_scorer_id is not None:
        srcqe = _mean([stack.score_source(source_scorer_id, text, pair) for text in texts])

    def style_mean(attribute: str) -> float | None:
        if not covered:
            return None
        return _mean([getattr(a, attribute) for a in covered])

    return DataQualityReport(
        diversity=diversity,
        grammaticality=style_mean("grammaticality"),
        naturalness=style_mean("naturalness"),
        word_rarity=style_mean("word_rarity"),
        syntax_complexity=style_mean("syntax_complexity"),
        avg_word_count=avg_word_count,
        avg_word_length=avg_word_length,
        qe=per_scorer_means,
        qe_combined=evaluation.mean,
        srcqe=srcqe,
        item_count=len(records),
        analysis_coverage=len(covered) / len(records),
        missing_analyses=missing,
        qe_excluded=len(evaluation.excluded),
    )


def pareto_points(
    reports: dict[str, DataQualityReport],
) -> list[tuple[str, float, float]]:
    """(method, mean z-normalized diversity, mean combined QE) per method.

    Each of the five diversity measures is z-normalized across methods
    (population sigma), then averaged per method. Because z-scores sum to
    zero, so do the returned averages.
    """
    if len(reports) < 2:
        raise ValidationError(f"pareto needs >= 2 methods, got {len(reports)}")
    methods = list(reports)
    z_columns = [
        z_normalize([reports[m].diversity.measure(measure) for m in methods])
        for measure in DIVERSITY_MEASURES
    ]
    points = []
    for position, method in enumerate(methods):
        z_average = _mean([column[position] for column in z_columns])
        points.append((method, z_average, reports[method].qe_combined))
    return points


# ---------------------------------------------------------------------------
# record annotation


def annotate_records(
    records: list[DatasetRecord],
    pair: LanguagePair,
    stack: ProviderStack,
    *,
    analyzer_id: str,
    translator_id: str,
    parse_retries: int = 2,
) -> tuple[list[DatasetRecord], list[tuple[int, str]]]:
    """Fill ``analysis`` and ``error_modes`` on every record through the
    analysis prompts; items that keep failing stay un-annotated and are
    reported."""

    def ask(prompt: str, parser, sample: int):
        conversation = [ChatMessage("user", prompt)]
        for attempt in range(parse_retries + 1):
            reply = stack.generate(analyzer_id, conversation, sample=sample)
            try:
                return parser(reply)
            except ParseError:
                if attempt == parse_retries:
                    raise
                conversation.append(ChatMessage("assistant", reply))
                conversation.append(ChatMessage("user", ANALYSIS_REMINDER))
        raise AssertionError("unreachable")

    annotated: list[DatasetRecord] = []
    failures: list[tuple[int, str]] = []
    for position, record in enumerate(records):
        try:
            analysis = ask(
                render_source_analysis(record.source), parse_source_analysis, sample=position
            )
            translation = stack.translate(translator_id, record.source, pair)
            report = ask(
                render_target_analysis(record.source, translation),
                parse_target_analysis,
                sample=position,
            )
            annotated.append(
                DatasetRecord(
                    source=record.source,
                    language_pair=record.language_pair,
                    method=record.method,
                    seed=record.seed,
                    targets=record.targets,
                    trajectory_ref=record.trajectory_ref,
                    analysis=analysis,
                    error_modes=report.error_modes,
                )
            )
        except MTBreakerError as exc:
            failures.append((position, f"{type(exc).__name__}: {exc}"))
            annotated.append(record)
    return annotated, failures


# ---------------------------------------------------------------------------
# report rendering


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise MTBreakerError(f"cannot write report to {path}: {exc}") from None


def _series_rows(series: tuple[StepSummary, ...]) -> list[list]:
    rows = []
    for step, summary in enumerate(series):
        rows.append(
            [
                step,
                "" if summary.mean is None else repr(summary.mean),
                "" if summary.lo is None else repr(summary.lo),
                "" if summary.hi is None else repr(summary.hi),
            ]
        )
    return rows


def write_history_files(history: DifficultyHistory, out_dir: str | Path) -> list[Path]:
    """Plot-data CSVs (step, mean, lo, hi) for both curves plus a summary
    JSON with the variance bookkeeping."""
    out = Path(out_dir)
    cummin_path = out / "history_cummin.csv"
    steps_path = out / "history_steps.csv"
    header = ["step", "mean", "lo", "hi"]
    _write_csv(cummin_path, header, _series_rows(history.cumulative_min))
    _write_csv(steps_path, header, _series_rows(history.per_step))
    summary_path = out / "history_summary.json"
    summary = {
        "pooled_variance": history.pooled_variance,
        "per_step_variance": [s.variance for s in history.per_step],
        "per_step_count": [s.count for s in history.per_step],
    }
    summary_path.write_text(json.dumps(summary, indent=2) + "\n", "utf-8")
    return [cummin_path, steps_path, summary_path]


def write_pareto_csv(points: list[tuple[str, float, float]], path: str | Path) -> Path:
    """(x, y, label) plot data: x = mean z-diversity, y = mean combined QE."""
    target = Path(path)
    _write_csv(
        target,
        ["x", "y", "label"],
        [[repr(z), repr(qe), method] for method, z, qe in points],
    )
    return target


def write_transfer_files(matrix: TransferMatrix, out_dir: str | Path) -> list[Path]:
    """Full-precision CSV plus a 2-decimal human-readable table."""
    out = Path(out_dir)
    csv_path = out / f"transfer_{matrix.axis}.csv"
    rows = [
        [row] + [repr(matrix.cell(row, column)) for column in matrix.columns]
        for row in matrix.rows
    ]
    _write_csv(csv_path, ["dataset"] + list(matrix.columns), rows)

    text_path = out / f"transfer_{matrix.axis}.txt"
    width = max(len(label) for label in matrix.rows + matrix.columns + ("dataset",)) + 2
    lines = ["".join(label.rjust(width) for label in ("dataset",) + matrix.columns)]
    for row in matrix.rows:
        cells = [format_decimal(matrix.cell(row, column), 2) for column in matrix.columns]
        lines.append("".join(label.rjust(width) for label in (row, *cells)))
    text_path.parent.mkdir(parents=True, exist_ok=True)
    text_path.write_text("\n".join(lines) + "\n", "utf-8")
    return [csv_path, text_path]


_QUALITY_ROWS: list[tuple[str, str]] = [
    ("Diversity (embd)", "diversity.embd"),
    ("Diversity (chrF)", "diversity.chrf"),
    ("Diversity (topics)", "diversity.topics"),
    ("Diversity (errors)", "diversity.errors"),
    ("Diversity (words)", "diversity.words"),
    ("Grammaticality", "grammaticality"),
    ("Naturalness", "naturalness"),
    ("Word Rarity", "word_rarity"),
    ("Syntax Complexity", "syntax_complexity"),
    ("Avg. Word Count", "avg_word_count"),
    ("Avg. Word Length", "avg_word_length"),
]


def _report_value(report: DataQualityReport, dotted: str):
    node = report
    for part in dotted.split("."):
        node = getattr(node, part)
    return node


def _quality_grid(reports: dict[str, DataQualityReport]) -> tuple[list[str], list[list]]:
    scorer_ids: list[str] = []
    for report in reports.values():
        for scorer_id in report.qe:
            if scorer_id not in scorer_ids:
                scorer_ids.append(scorer_id)
    rows: list[list] = []
    for label, dotted in _QUALITY_ROWS:
        rows.append([label] + [_report_value(r, dotted) for r in reports.values()])
    for scorer_id in scorer_ids:
        rows.append([f"QE ({scorer_id})"] + [r.qe.get(scorer_id) for r in reports.values()])
    rows.append(["QE (combined)"] + [r.qe_combined for r in reports.values()])
    rows.append(["SRCQE"] + [r.srcqe for r in reports.values()])
    rows.append(["Analysis coverage"] + [r.analysis_coverage for r in reports.values()])
    rows.append(["QE exclusions"] + [r.qe_excluded for r in reports.values()])
    rows.append(["Items"] + [r.item_count for r in reports.values()])
    return ["row"] + list(reports), rows


def write_quality_files(
    reports: dict[str, DataQualityReport], out_dir: str | Path
) -> list[Path]:
    """Data-quality table as full-precision CSV and rounded text table."""
    out = Path(out_dir)
    header, rows = _quality_grid(reports)
    csv_rows = [
        [row[0]] + ["" if v is None else repr(v) if isinstance(v, float) else v for v in row[1:]]
        for row in rows
    ]
    csv_path = out / "data_quality.csv"
    _write_csv(csv_path, header, csv_rows)

    text_path = out / "data_quality.txt"
    width = max(len(str(row[0])) for row in rows) + 2
    col_width = max(12, max(len(m) for m in reports) + 2)

    def fmt(value) -> str:
        if value is None:
            return "-"
        if isinstance(value, float):
            return format_decimal(value, 2)
        return str(value)

    lines = ["".join([("row").ljust(width)] + [m.rjust(col_width) for m in reports])]
    for row in rows:
        lines.append(
            "".join([str(row[0]).ljust(width)] + [fmt(v).rjust(col_width) for v in row[1:]])
        )
    text_path.parent.mkdir(parents=True, exist_ok=True)
    text_path.write_text("\n".join(lines) + "\n", "utf-8")
    return [csv_path, text_path]
