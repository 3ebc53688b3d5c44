from __future__ import annotations

import csv

import pytest

from mtbreaker.core import (
    DatasetRecord,
    LanguagePair,
    MethodSpec,
    SourceAnalysis,
    Step,
    Trajectory,
    combine_scores,
    select_step,
)
from mtbreaker.errors import ProviderUnavailableError, ValidationError
from mtbreaker.harness import (
    DataQualityReport,
    DiversityReport,
    TransferMatrix,
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
from mtbreaker.providers import ProviderConfig, ProviderStack, build_stack

from conftest import MOCK_CONFIGS, mtb_spec


def record(source: str, pair: LanguagePair, method: str = "seeds") -> DatasetRecord:
    return DatasetRecord(source=source, language_pair=pair, method=method, targets=("mt",))


def score_step(index: int, values: list[float], failed: bool = False) -> Step:
    if failed:
        return Step(index=index, source=f"s{index}", failed=True)
    return Step(
        index=index,
        source=f"s{index}",
        translations={f"mt{k}": f"t{k}" for k in range(len(values))},
        scores={f"mt{k}": combine_scores({"qe": v}) for k, v in enumerate(values)},
    )


def trajectory_from_scores(values: list[float], failed_at: set[int] = frozenset()) -> Trajectory:
    spec = mtb_spec(steps=len(values) - 1)
    steps = tuple(
        score_step(i, [v], failed=i in failed_at) for i, v in enumerate(values)
    )
    return Trajectory(
        method=spec,
        language_pair=LanguagePair("English", "Czech"),
        steps=steps,
        selected=select_step(list(steps)),
    )


class TestEvaluateDataset:
    def test_marker_means(self, mock_stack, encs):
        records = [
            record("plain text here", encs),
            record("one @@ marker", encs),
            record("two @@ markers @@", encs),
        ]
        result = evaluate_dataset(records, "mt", ["qe"], encs, mock_stack)
        assert [s.combined for s in result.scores] == [100.0, 80.0, 60.0]
        assert result.mean == pytest.approx(80.0)
        assert result.excluded == ()

    def test_empty_records_rejected(self, mock_stack, encs):
        with pytest.raises(ValidationError):
            evaluate_dataset([], "mt", ["qe"], encs, mock_stack)

    def test_warm_cache_reproduces_means(self, cached_mock_stack, encs):
        records = [record("a @@ b", encs), record("c d", encs)]
        first = evaluate_dataset(records, "mt", ["qe"], encs, cached_mock_stack)
        second = evaluate_dataset(records, "mt", ["qe"], encs, cached_mock_stack)
        assert first.mean == second.mean
        assert [s.combined for s in first.scores] == [s.combined for s in second.scores]

    def test_failed_items_excluded_not_zeroed(self, encs):
        class FlakyTranslator:
            def translate(self, source, pair):
                if "BOOM" in source:
                    raise ProviderUnavailableError("mt", "outage")
                return source.upper()

        stack = build_stack([c for c in MOCK_CONFIGS if c.id != "mt"])
        stack._providers["mt"] = (
            ProviderConfig(id="mt", kind="translator", adapter="custom"),
            FlakyTranslator(),
        )
        records = [record("good text", encs), record("BOOM text", encs)]
        result = evaluate_dataset(records, "mt", ["qe"], encs, stack)
        assert result.mean == 100.0
        assert len(result.excluded) == 1
        assert result.scores[1] is None
        assert result.exclusion_fraction == 0.5

    def test_all_items_failing_raises(self, encs):
        class DeadTranslator:
            def translate(self, source, pair):
                raise ProviderUnavailableError("mt", "down")

        stack = build_stack([c for c in MOCK_CONFIGS if c.id != "mt"])
        stack._providers["mt"] = (
            ProviderConfig(id="mt", kind="translator", adapter="custom"),
            DeadTranslator(),
        )
        with pytest.raises(ValidationError):
            evaluate_dataset([record("x y", encs)], "mt", ["qe"], encs, stack)


def tagged_stack(tags: list[str]) -> ProviderStack:
    """One uppercase translator per tag, each dropping its own tag tokens,
    plus the overlap scorer."""
    configs = [
        ProviderConfig(id=tag, kind="translator", adapter="mock:uppercase",
                       options={"drop_marker": f"@{tag}@"})
        for tag in tags
    ]
    configs.append(ProviderConfig(id="overlap", kind="quality_scorer", adapter="mock:overlap"))
    return build_stack(configs)


def tagged_dataset(tag: str, pair: LanguagePair, n: int = 3) -> list[DatasetRecord]:
    return [
        record(f"item{i} alpha beta gamma @{tag}@", pair, method="mtbreaker")
        for i in range(n)
    ]


class TestModelTransferMatrix:
    def test_diagonal_strictly_minimal(self, encs):
        tags = ["m1", "m2", "m3", "m4"]
        stack = tagged_stack(tags)
        datasets = {tag: tagged_dataset(tag, encs) for tag in tags}
        matrix = model_transfer_matrix(datasets, tags, [encs], ["overlap"], stack)
        for row in tags:
            for column in tags:
                if row == column:
                    continue
                assert matrix.cell(row, row) < matrix.cell(row, column)
                assert matrix.cell(column, column) < matrix.cell(row, column)

    def test_seeds_row_is_row_maximum(self, encs):
        tags = ["m1", "m2"]
        stack = tagged_stack(tags)
        datasets = {
            "m1": tagged_dataset("m1", encs),
            "m2": tagged_dataset("m2", encs),
            "Seeds": [record(f"clean text {i}", encs) for i in range(3)],
        }
        matrix = model_transfer_matrix(datasets, tags, [encs], ["overlap"], stack)
        for column in tags:
            assert matrix.cell("Seeds", column) == 100.0
            assert matrix.cell("Seeds", column) >= max(
                matrix.cell(row, column) for row in datasets
            )

    def test_identical_datasets_give_equal_rows(self, encs):
        stack = build_stack(
            list(MOCK_CONFIGS)
            + [ProviderConfig(id="mt2", kind="translator", adapter="mock:uppercase")]
        )
        records = [record("x @@ y", encs), record("z w", encs)]
        datasets = {"a": records, "b": list(records)}
        matrix = model_transfer_matrix(datasets, ["mt", "mt2"], [encs], ["qe"], stack)
        for column in ("mt", "mt2"):
            assert matrix.cell("a", column) == pytest.approx(
                matrix.cell("b", column), abs=1e-9
            )

    def test_too_few_rows_rejected(self, mock_stack, encs):
        with pytest.raises(ValidationError):
            model_transfer_matrix(
                {"only": [record("x", encs)]}, ["mt", "mt2"], [encs], ["qe"], mock_stack
            )

    def test_missing_dataset_rejected(self, mock_stack, encs):
        with pytest.raises(ValidationError):
            model_transfer_matrix(
                {"a": [record("x", encs)], "b": []}, ["mt", "mt2"], [encs], ["qe"], mock_stack
            )

    def test_matrix_must_be_rectangular(self):
        with pytest.raises(ValidationError):
            TransferMatrix(
                axis="model", rows=("a", "b"), columns=("c",),
                cells={("a", "c"): 1.0}, counts={("a", "c"): 1},
            )


class TestLanguageTransferMatrix:
    def test_smoke_two_by_two(self, mock_stack, encs, ende):
        datasets = {
            "encs": [record("a @@ b", encs), record("c d", encs)],
            "ende": [record("e f", ende), record("g @@ h", ende)],
        }
        matrix = language_transfer_matrix(
            datasets,
            {"encs": encs, "ende": ende},
            ["mt"],
            ["qe"],
            mock_stack,
        )
        assert matrix.axis == "language"
        # marker scorer only sees sources, so all cells share the same mean
        assert matrix.cell("encs", "encs") == pytest.approx(90.0)
        assert matrix.cell("encs", "ende") == pytest.approx(90.0)


class TestDifficultyHistory:
    def test_closed_form_zero_width(self):
        trajectories = [trajectory_from_scores([100, 80, 60, 40]) for _ in range(5)]
        history = difficulty_history(trajectories)
        assert [s.mean for s in history.cumulative_min] == [100, 80, 60, 40]
        for summary in history.cumulative_min:
            assert summary.lo == summary.mean == summary.hi

    def test_single_trajectory_has_no_bounds(self):
        history = difficulty_history([trajectory_from_scores([100, 80])])
        assert history.cumulative_min[0].mean == 100
        assert history.cumulative_min[0].lo is None
        assert history.cumulative_min[0].hi is None

    def test_cumulative_min_non_increasing(self):
        trajectories = [
            trajectory_from_scores([80, 90, 30, 50]),
            trajectory_from_scores([100, 20, 70, 60]),
        ]
        history = difficulty_history(trajectories)
        means = [s.mean for s in history.cumulative_min]
        assert all(a >= b for a, b in zip(means, means[1:]))

    def test_failed_steps_inherit_for_cummin_and_drop_from_raw(self):
        trajectory = trajectory_from_scores([100, 0, 60], failed_at={1})
        history = difficulty_history([trajectory, trajectory])
        assert [s.mean for s in history.cumulative_min] == [100, 100, 60]
        assert history.per_step[1].mean is None
        assert history.per_step[1].count == 0

    def test_mixed_step_counts_rejected(self):
        with pytest.raises(ValidationError):
            difficulty_history(
                [trajectory_from_scores([100, 80]), trajectory_from_scores([100, 80, 60])]
            )

    def test_variance_bookkeeping(self):
        trajectories = [
            trajectory_from_scores([100, 80]),
            trajectory_from_scores([90, 60]),
        ]
        history = difficulty_history(trajectories)
        assert history.per_step[0].variance == pytest.approx(50.0)  # var([100, 90])
        assert history.pooled_variance is not None


def make_report(embd, chrf_, topics, errors, words, qe=50.0) -> DataQualityReport:
    return DataQualityReport(
        diversity=DiversityReport(embd=embd, chrf=chrf_, topics=topics,
                                  errors=errors, words=words),
        grammaticality=90.0,
        naturalness=80.0,
        word_rarity=30.0,
        syntax_complexity=50.0,
        avg_word_count=10.0,
        avg_word_length=4.5,
        qe={"qe": qe},
        qe_combined=qe,
        srcqe=None,
        item_count=10,
        analysis_coverage=1.0,
        missing_analyses=(),
        qe_excluded=0,
    )


class TestParetoPoints:
    def test_identical_reports_all_zero(self):
        reports = {
            "a": make_report(0.3, 0.7, 100, 20, 1500),
            "b": make_report(0.3, 0.7, 100, 20, 1500),
        }
        points = pareto_points(reports)
        assert all(z == 0.0 for _, z, _ in points)

    def test_dominant_method_has_max_z(self):
        reports = {
            "low": make_report(0.1, 0.2, 50, 10, 1000),
            "mid": make_report(0.2, 0.4, 60, 15, 1200),
            "high": make_report(0.3, 0.7, 100, 20, 1500),
        }
        points = {m: z for m, z, _ in pareto_points(reports)}
        assert points["high"] == max(points.values())

    def test_two_method_fixture_is_plus_minus_one(self):
        reports = {
            "worse": make_report(0.1, 0.2, 50, 10, 1000, qe=80.0),
            "better": make_report(0.3, 0.7, 100, 20, 1500, qe=40.0),
        }
        points = pareto_points(reports)
        by_method = {m: (z, qe) for m, z, qe in points}
        assert by_method["better"][0] == pytest.approx(1.0)
        assert by_method["worse"][0] == pytest.approx(-1.0)
        assert by_method["better"][1] == 40.0

    def test_z_averages_sum_to_zero(self):
        reports = {
            "a": make_report(0.1, 0.2, 50, 22, 1400),
            "b": make_report(0.2, 0.9, 60, 11, 1100),
            "c": make_report(0.9, 0.4, 260, 18, 2100),
        }
        total = sum(z for _, z, _ in pareto_points(reports))
        assert total == pytest.approx(0.0, abs=1e-9)

    def test_needs_two_methods(self):
        with pytest.raises(ValidationError):
            pareto_points({"only": make_report(0.1, 0.2, 50, 10, 1000)})


def analysis(topics=("science",)) -> SourceAnalysis:
    return SourceAnalysis(
        grammaticality=90, naturalness=80, word_rarity=30,
        syntax_complexity=50, topics=tuple(topics),
    )


class TestDataQualityReport:
    def test_identical_texts_hit_diversity_floor(self, mock_stack, encs):
        records = [
            DatasetRecord(source="same text twice", language_pair=encs, method="seeds",
                          targets=("mt",), analysis=analysis(), error_modes=("idiom",)),
            DatasetRecord(source="same text twice", language_pair=encs, method="seeds",
                          targets=("mt",), analysis=analysis(), error_modes=("gender",)),
        ]
        report = data_quality_report(
            records, encs, mock_stack,
            translator_id="mt", scorer_ids=["qe"], embedder_id="embd",
            source_scorer_id="srcqe",
        )
        assert report.diversity.embd == pytest.approx(0.0)
        assert report.diversity.chrf == pytest.approx(0.0)
        assert report.diversity.words == 3
        assert report.diversity.errors == 2
        assert report.grammaticality == 90.0
        assert report.qe == {"qe": 100.0}
        assert report.qe_combined == 100.0
        assert report.srcqe == 100.0
        assert report.analysis_coverage == 1.0

    def test_missing_analyses_listed_with_coverage(self, mock_stack, encs):
        records = [
            DatasetRecord(source="first text", language_pair=encs, method="seeds",
                          targets=("mt",), analysis=analysis()),
            DatasetRecord(source="second words", language_pair=encs, method="seeds",
                          targets=("mt",)),
        ]
        report = data_quality_report(
            records, encs, mock_stack,
            translator_id="mt", scorer_ids=["qe"], embedder_id="embd",
        )
        assert report.analysis_coverage == 0.5
        assert report.missing_analyses == (1,)
        assert report.grammaticality == 90.0
        assert report.srcqe is None

    def test_single_record_rejected(self, mock_stack, encs):
        with pytest.raises(ValidationError):
            data_quality_report(
                [record("only one", encs)], encs, mock_stack,
                translator_id="mt", scorer_ids=["qe"], embedder_id="embd",
            )


class TestAnnotateRecords:
    def test_analyst_mock_annotates_everything(self, mock_stack, encs):
        records = [record("clean example text", encs), record("noisy @@ text", encs)]
        annotated, failures = annotate_records(
            records, encs, mock_stack, analyzer_id="analyst", translator_id="mt"
        )
        assert failures == []
        assert all(r.analysis is not None for r in annotated)
        assert annotated[0].error_modes == ()
        assert "omissions" in annotated[1].error_modes

    def test_unparseable_analyst_reports_failures(self, encs):
        class Gibberish:
            def generate(self, conversation, *, sample=0):
                return "not json at all"

        stack = build_stack([c for c in MOCK_CONFIGS if c.id != "analyst"])
        stack._providers["analyst"] = (
            ProviderConfig(id="analyst", kind="generator", adapter="custom"),
            Gibberish(),
        )
        records = [record("some text", encs)]
        annotated, failures = annotate_records(
            records, encs, stack, analyzer_id="analyst", translator_id="mt",
            parse_retries=1,
        )
        assert len(failures) == 1
        assert annotated[0].analysis is None


class TestRenderers:
    def test_history_files(self, tmp_path):
        history = difficulty_history(
            [trajectory_from_scores([100, 80, 60]) for _ in range(3)]
        )
        paths = write_history_files(history, tmp_path)
        rows = list(csv.reader(paths[0].read_text().splitlines()))
        assert rows[0] == ["step", "mean", "lo", "hi"]
        assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
        means = [float(r[1]) for r in rows[1:]]
        assert means == sorted(means, reverse=True)

    def test_history_bounds_omitted_for_single_trajectory(self, tmp_path):
        history = difficulty_history([trajectory_from_scores([100, 80])])
        paths = write_history_files(history, tmp_path)
        rows = list(csv.reader(paths[0].read_text().splitlines()))
        assert rows[1][2] == "" and rows[1][3] == ""

    def test_transfer_files_and_rounding(self, tmp_path):
        matrix = TransferMatrix(
            axis="model",
            rows=("r1", "r2"),
            columns=("c1", "c2"),
            cells={("r1", "c1"): 40.175, ("r1", "c2"): 50.0,
                   ("r2", "c1"): 60.0, ("r2", "c2"): 70.0},
            counts={("r1", "c1"): 3, ("r1", "c2"): 3, ("r2", "c1"): 3, ("r2", "c2"): 3},
        )
        csv_path, text_path = write_transfer_files(matrix, tmp_path)
        rows = list(csv.reader(csv_path.read_text().splitlines()))
        assert rows[0] == ["dataset", "c1", "c2"]
        assert rows[1][0] == "r1"
        assert float(rows[1][1]) == 40.175  # full precision in the CSV
        assert "40.18" in text_path.read_text()  # half-up in the table

    def test_pareto_csv(self, tmp_path):
        path = write_pareto_csv(
            [("mtbreaker", 0.5, 40.0), ("seeds", -0.5, 90.0)], tmp_path / "pareto.csv"
        )
        rows = list(csv.reader(path.read_text().splitlines()))
        assert rows[0] == ["x", "y", "label"]
        assert rows[1][2] == "mtbreaker"

    def test_quality_files(self, tmp_path):
        reports = {
            "seeds": make_report(0.33, 0.76, 247, 23, 1566, qe=89.78),
            "mtbreaker": make_report(0.34, 0.77, 262, 24, 2082, qe=67.52),
        }
        csv_path, text_path = write_quality_files(reports, tmp_path)
        content = csv_path.read_text()
        assert "Diversity (embd)" in content
        assert "QE (qe)" in content
        table = text_path.read_text()
        assert "89.78" in table
        assert "mtbreaker" in table

    def test_quality_grid_row_groups(self, tmp_path):
        # 5 diversity rows, 6 complexity & style rows, then the QE group
        reports = {"m": make_report(0.1, 0.2, 10, 5, 100)}
        csv_path, _ = write_quality_files(reports, tmp_path)
        labels = [row.split(",")[0] for row in csv_path.read_text().splitlines()[1:]]
        assert labels[:5] == [
            "Diversity (embd)", "Diversity (chrF)", "Diversity (topics)",
            "Diversity (errors)", "Diversity (words)",
        ]
        assert labels[5:11] == [
            "Grammaticality", "Naturalness", "Word Rarity",
            "Syntax Complexity", "Avg. Word Count", "Avg. Word Length",
        ]
        assert labels[11:13] == ["QE (qe)", "QE (combined)"]
        assert "SRCQE" in labels
