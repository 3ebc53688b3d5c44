"""Domain types shared by every other module, plus the score-combination rule.

Scores live on a 0-100 scale where 100 is a perfect translation and 0 the
worst; "difficulty" is simply the flip side (100 - score) and is never stored,
only labelled in reports. All types are immutable values after construction
and safe to share between concurrent tasks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, ValidationError

METHOD_NAMES = ("seeds", "zeroshot", "zeroshot_history", "zeroshot_min", "mtbreaker")

MODEL_KINDS = ("translator", "generator", "quality_scorer", "source_scorer", "embedder")

_COMBINE_TOL = 1e-9


@dataclass(frozen=True)
class LanguagePair:
    """A translation direction, with human-readable language names.

    The names are substituted verbatim into prompts ("a text in {source_lang}
    ... translate into {target_lang}"), so they should be plain English names
    like "English" or "Czech", not ISO codes.
    """

    source_lang: str
    target_lang: str

    def __post_init__(self) -> None:
        if not self.source_lang or not self.target_lang:
            raise ValidationError("language names must be non-empty")
        if self.source_lang == self.target_lang:
            raise ValidationError(
                f"source and target language must differ (both {self.source_lang!r})"
            )

    @property
    def label(self) -> str:
        return f"{self.source_lang}-{self.target_lang}"

    def to_dict(self) -> dict:
        return {"source_lang": self.source_lang, "target_lang": self.target_lang}

    @classmethod
    def from_dict(cls, d: dict) -> "LanguagePair":
        return cls(source_lang=d["source_lang"], target_lang=d["target_lang"])


@dataclass(frozen=True)
class ModelRef:
    """Reference to one configured model role.

    ``id`` is the handle used everywhere else (method specs, score maps,
    report labels); ``adapter`` names the provider configuration that backs
    it (e.g. "mock:adversarial" or "remote").
    """

    id: str
    kind: str
    adapter: str = "mock"

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("model id must be non-empty")
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")


@dataclass(frozen=True)
class ScoreSet:
    """Per-scorer quality scores for one translation plus their combination.

    ``combined`` is always the arithmetic mean of ``per_scorer`` values;
    use :func:`combine_scores` to construct one.
    """

    per_scorer: dict[str, float]
    combined: float

    def __post_init__(self) -> None:
        if not self.per_scorer:
            raise ValidationError("ScoreSet needs at least one scorer")
        for scorer, value in self.per_scorer.items():
            _check_score_range(scorer, value)
        mean = math.fsum(self.per_scorer.values()) / len(self.per_scorer)
        if abs(mean - self.combined) > _COMBINE_TOL:
            raise ValidationError(
                f"combined score {self.combined} is not the mean {mean} of per-scorer values"
            )

    def to_dict(self) -> dict:
        return {"per_scorer": dict(self.per_scorer), "combined": self.combined}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreSet":
        return cls(per_scorer=dict(d["per_scorer"]), combined=d["combined"])


def _check_score_range(label: str, value: float) -> None:
    if not isinstance(value, (int, float)) or math.isnan(value):
        raise ValidationError(f"score for {label!r} is not a number: {value!r}")
    if not 0.0 <= value <= 100.0:
        raise ValidationError(f"score for {label!r} out of [0,100]: {value}")


def combine_scores(per_scorer: dict[str, float]) -> ScoreSet:
    """Combine per-scorer scores into a :class:`ScoreSet` by arithmetic mean.

    Raises :class:`ConfigurationError` on an empty map and
    :class:`ValidationError` (naming the scorer) on out-of-range values.
    """
    if not per_scorer:
        raise ConfigurationError("no scorers configured: cannot combine an empty score map")
    for scorer, value in per_scorer.items():
        _check_score_range(scorer, value)
    combined = math.fsum(per_scorer.values()) / len(per_scorer)
    return ScoreSet(per_scorer=dict(per_scorer), combined=combined)


@dataclass(frozen=True)
class Step:
    """One candidate source in a trajectory with its translations and scores.

    ``failed`` marks steps whose source could not be generated (parse or
    provider exhaustion); they carry the previous step's source and are
    excluded from selection.
    """

    index: int
    source: str
    translations: dict[str, str] = field(default_factory=dict)
    scores: dict[str, ScoreSet] = field(default_factory=dict)
    failed: bool = False

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValidationError(f"step index must be >= 0, got {self.index}")
        if not self.failed:
            if not self.translations:
                raise ValidationError(f"step {self.index}: non-failed step has no translations")
            if set(self.scores) != set(self.translations):
                raise ValidationError(
                    f"step {self.index}: scores keyed by {sorted(self.scores)} but "
                    f"translations by {sorted(self.translations)}"
                )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "source": self.source,
            "translations": dict(self.translations),
            "scores": {t: s.to_dict() for t, s in self.scores.items()},
            "failed": self.failed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        return cls(
            index=d["index"],
            source=d["source"],
            translations=dict(d["translations"]),
            scores={t: ScoreSet.from_dict(s) for t, s in d["scores"].items()},
            failed=d["failed"],
        )


def trajectory_difficulty(step: Step) -> float:
    """Mean combined score across all translators present in a step.

    With a single target this degenerates to that target's combined score.
    Calling this on a failed step is a misuse (failed steps carry no
    meaningful candidate) and raises :class:`ValidationError`.
    """
    if step.failed:
        raise ValidationError(f"step {step.index} failed; caller must skip failed steps")
    if not step.scores:
        raise ValidationError(f"step {step.index} has no scores")
    return math.fsum(s.combined for s in step.scores.values()) / len(step.scores)


def select_step(steps: list[Step]) -> int:
    """Index of the non-failed step minimizing the cross-translator mean score.

    Ties break toward the smallest index (earlier sources stay closer to the
    seed, hence more natural).
    """
    best_index = -1
    best_score = math.inf
    for step in steps:
        if step.failed:
            continue
        score = trajectory_difficulty(step)
        if score < best_score:
            best_score = score
            best_index = step.index
    if best_index < 0:
        raise ValidationError("no non-failed step to select from")
    return best_index


@dataclass(frozen=True)
class MethodSpec:
    """Declarative description of one generation method run.

    ``steps`` is the number of breaking iterations N (mtbreaker only),
    ``samples`` the number of independent generations k (zeroshot_min only),
    and more than one target translator encodes the Multi variant whose
    selection averages scores across all targets.
    """

    name: str
    target_translators: tuple[str, ...]
    scorers: tuple[str, ...]
    generator: str
    steps: int = 0
    seeded: bool = False
    qe_feedback: bool = False
    samples: int = 1

    def __post_init__(self) -> None:
        defects = []
        if self.name not in METHOD_NAMES:
            defects.append(f"unknown method name {self.name!r}")
        if self.name == "mtbreaker" and self.steps < 1:
            defects.append("mtbreaker requires steps >= 1")
        if self.name in ("seeds", "zeroshot", "zeroshot_history") and self.steps != 0:
            defects.append(f"{self.name} requires steps == 0, got {self.steps}")
        if self.name == "zeroshot_min":
            if self.steps != 0:
                defects.append(f"zeroshot_min requires steps == 0, got {self.steps}")
            if self.samples < 2:
                defects.append(f"zeroshot_min requires samples >= 2, got {self.samples}")
        if self.samples < 1:
            defects.append(f"samples must be >= 1, got {self.samples}")
        if self.qe_feedback and self.name != "mtbreaker":
            defects.append("qe_feedback is only valid for mtbreaker")
        if not self.target_translators:
            defects.append("at least one target translator is required")
        if not self.scorers:
            defects.append("at least one scorer is required")
        if not self.generator:
            defects.append("a generator id is required")
        if defects:
            raise ValidationError("; ".join(defects), defects=defects)

    @property
    def is_multi(self) -> bool:
        return len(self.target_translators) > 1

    @property
    def expected_step_count(self) -> int:
        # zeroshot_min trajectories hold the k samples as steps; every other
        # method holds the N+1 iterative candidates.
        if self.name == "zeroshot_min":
            return self.samples
        return self.steps + 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "steps": self.steps,
            "seeded": self.seeded,
            "qe_feedback": self.qe_feedback,
            "samples": self.samples,
            "target_translators": list(self.target_translators),
            "scorers": list(self.scorers),
            "generator": self.generator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        # config convenience: breaking runs plateau around 10 steps and the
        # min variant is defined as "run 10x", so both default to 10
        name = d["name"]
        default_steps = 10 if name == "mtbreaker" else 0
        default_samples = 10 if name == "zeroshot_min" else 1
        return cls(
            name=name,
            steps=d.get("steps", default_steps),
            seeded=d.get("seeded", False),
            qe_feedback=d.get("qe_feedback", False),
            samples=d.get("samples", default_samples),
            target_translators=tuple(d["target_translators"]),
            scorers=tuple(d["scorers"]),
            generator=d["generator"],
        )

    def digest_source(self) -> str:
        """Canonical JSON used for plan/method digests."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class Trajectory:
    """The full record of one breaking run.

    Holds every candidate source with its translations and scores, plus the
    index of the selected (most difficult) step.
    """

    method: MethodSpec
    language_pair: LanguagePair
    steps: tuple[Step, ...]
    selected: int
    seed: str | None = None

    def __post_init__(self) -> None:
        expected = self.method.expected_step_count
        if len(self.steps) != expected:
            raise ValidationError(
                f"{self.method.name} trajectory must hold {expected} steps, got {len(self.steps)}"
            )
        for position, step in enumerate(self.steps):
            if step.index != position:
                raise ValidationError(
                    f"step at position {position} carries index {step.index}"
                )
        if not 0 <= self.selected < len(self.steps):
            raise ValidationError(f"selected index {self.selected} out of range")
        chosen = self.steps[self.selected]
        if chosen.failed:
            raise ValidationError(f"selected step {self.selected} is failed")
        if select_step(list(self.steps)) != self.selected:
            raise ValidationError(
                f"selected index {self.selected} does not minimize the mean combined score"
            )

    @property
    def selected_source(self) -> str:
        return self.steps[self.selected].source

    def to_dict(self) -> dict:
        return {
            "method": self.method.to_dict(),
            "language_pair": self.language_pair.to_dict(),
            "seed": self.seed,
            "steps": [s.to_dict() for s in self.steps],
            "selected": self.selected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(
            method=MethodSpec.from_dict(d["method"]),
            language_pair=LanguagePair.from_dict(d["language_pair"]),
            seed=d.get("seed"),
            steps=tuple(Step.from_dict(s) for s in d["steps"]),
            selected=d["selected"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "Trajectory":
        return cls.from_dict(json.loads(payload))


@dataclass(frozen=True)
class SourceAnalysis:
    """LLM-judged style attributes of one source text (0-100 scales)."""

    grammaticality: float
    naturalness: float
    word_rarity: float
    syntax_complexity: float
    topics: tuple[str, ...]

    def __post_init__(self) -> None:
        for label, value in (
            ("grammaticality", self.grammaticality),
            ("naturalness", self.naturalness),
            ("word_rarity", self.word_rarity),
            ("syntax_complexity", self.syntax_complexity),
        ):
            _check_score_range(label, value)
        if not 1 <= len(self.topics) <= 5:
            raise ValidationError(f"topics must list 1-5 entries, got {len(self.topics)}")
        if any(not t for t in self.topics):
            raise ValidationError("topic strings must be non-empty")

    def to_dict(self) -> dict:
        return {
            "grammaticality": self.grammaticality,
            "naturalness": self.naturalness,
            "word_rarity": self.word_rarity,
            "syntax_complexity": self.syntax_complexity,
            "topics": list(self.topics),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SourceAnalysis":
        return cls(
            grammaticality=d["grammaticality"],
            naturalness=d["naturalness"],
            word_rarity=d["word_rarity"],
            syntax_complexity=d["syntax_complexity"],
            topics=tuple(d["topics"]),
        )


@dataclass(frozen=True)
class DatasetRecord:
    """A finished test-set item: the selected source plus its provenance."""

    source: str
    language_pair: LanguagePair
    method: str
    targets: tuple[str, ...]
    seed: str | None = None
    trajectory_ref: int | None = None
    analysis: SourceAnalysis | None = None
    error_modes: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise ValidationError("record source must be non-empty")
        if self.method not in METHOD_NAMES:
            raise ValidationError(f"unknown method name {self.method!r}")

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "language_pair": self.language_pair.to_dict(),
            "method": self.method,
            "seed": self.seed,
            "targets": list(self.targets),
            "trajectory_ref": self.trajectory_ref,
            "analysis": self.analysis.to_dict() if self.analysis else None,
            "error_modes": list(self.error_modes) if self.error_modes is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        analysis = d.get("analysis")
        error_modes = d.get("error_modes")
        return cls(
            source=d["source"],
            language_pair=LanguagePair.from_dict(d["language_pair"]),
            method=d["method"],
            seed=d.get("seed"),
            targets=tuple(d["targets"]),
            trajectory_ref=d.get("trajectory_ref"),
            analysis=SourceAnalysis.from_dict(analysis) if analysis else None,
            error_modes=tuple(error_modes) if error_modes is not None else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "DatasetRecord":
        return cls.from_dict(json.loads(payload))
