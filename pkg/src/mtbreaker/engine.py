"""The breaking loop and every generation method variant.

One trajectory is strictly sequential (each step extends the previous
conversation state); distinct items are independent and run concurrently
under the plan's limit, except the history variant whose items feed each
other by definition. Results are persisted incrementally in plan order so a
re-run of the same plan resumes where the previous one stopped.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import store
from .core import (
    DatasetRecord,
    LanguagePair,
    MethodSpec,
    ScoreSet,
    Step,
    Trajectory,
    combine_scores,
    select_step,
    trajectory_difficulty,
)
from .errors import (
    ConfigurationError,
    MTBreakerError,
    ParseError,
    ValidationError,
)
from .metrics import round_half_up
from .prompts import (
    DELIMITER,
    LENGTH_REMINDER,
    SOURCE_REMINDER,
    parse_source,
    render_followup,
    render_initial,
)
from .providers.base import ChatMessage
from .providers.stack import ProviderStack

DEFAULT_PARSE_RETRIES = 2
DEFAULT_HISTORY_WINDOW = 50
# Reject generated sources that balloon past this multiple of the seed length:
# difficulty must not be trivially induced by runaway segment length.
MAX_LENGTH_FACTOR = 10

SEED_LENGTH_POLICIES = ("paired", "corpus_mean")


@dataclass(frozen=True)
class PlanItem:
    """One unit of work: a (pair, index) slot with its seed or length donor."""

    pair: LanguagePair
    index: int
    seed: str | None
    seed_length: int


@dataclass(frozen=True)
class RunPlan:
    """Everything needed to run one method over a seed corpus and pairs."""

    method: MethodSpec
    language_pairs: tuple[LanguagePair, ...]
    seeds: tuple[str, ...] = ()
    seed_length_policy: str = "paired"
    concurrency: int = 8
    parse_retry_budget: int = DEFAULT_PARSE_RETRIES
    history_window: int = DEFAULT_HISTORY_WINDOW
    item_count: int | None = None
    seed_length: int | None = None

    @property
    def uses_seed_texts(self) -> bool:
        return self.method.seeded or self.method.name == "seeds"

    def validate(self) -> list[str]:
        """Every defect, not just the first."""
        defects: list[str] = []
        if not self.language_pairs:
            defects.append("at least one language pair is required")
        if self.seed_length_policy not in SEED_LENGTH_POLICIES:
            defects.append(f"unknown seed_length_policy {self.seed_length_policy!r}")
        if self.uses_seed_texts and not self.seeds:
            defects.append(f"method {self.method.name!r} requires seeds")
        if not self.uses_seed_texts and self.seed_length_policy == "paired" and not self.seeds:
            defects.append("paired seed-length policy requires seeds as length donors")
        if (
            not self.seeds
            and self.seed_length_policy == "corpus_mean"
            and (self.item_count is None or self.seed_length is None)
        ):
            defects.append(
                "corpus_mean policy without seeds requires explicit item_count and seed_length"
            )
        for position, seed in enumerate(self.seeds):
            if not seed.strip():
                defects.append(f"seed {position} is empty")
            elif self.method.seeded and DELIMITER in seed:
                defects.append(f"seed {position} contains the {DELIMITER} delimiter")
        if self.concurrency < 1:
            defects.append(f"concurrency must be >= 1, got {self.concurrency}")
        if self.parse_retry_budget < 0:
            defects.append(f"parse retry budget must be >= 0, got {self.parse_retry_budget}")
        if self.history_window < 0:
            defects.append(f"history window must be >= 0, got {self.history_window}")
        if self.item_count is not None and self.item_count < 1:
            defects.append(f"item_count must be >= 1, got {self.item_count}")
        if self.seed_length is not None and self.seed_length < 1:
            defects.append(f"seed_length must be >= 1, got {self.seed_length}")
        return defects

    def raise_if_invalid(self) -> None:
        defects = self.validate()
        if defects:
            raise ValidationError("; ".join(defects), defects=defects)

    def _corpus_mean_length(self) -> int:
        if self.seed_length is not None:
            return self.seed_length
        counts = [len(seed.split()) for seed in self.seeds]
        return max(1, int(round_half_up(math.fsum(counts) / len(counts))))

    def items_for(self, pair: LanguagePair) -> list[PlanItem]:
        count = len(self.seeds) if self.seeds else (self.item_count or 0)
        items: list[PlanItem] = []
        for index in range(count):
            seed = self.seeds[index] if self.uses_seed_texts else None
            if self.uses_seed_texts:
                length = max(1, len(self.seeds[index].split()))
            elif self.seed_length_policy == "paired":
                length = max(1, len(self.seeds[index].split()))
            else:
                length = self._corpus_mean_length()
            items.append(PlanItem(pair=pair, index=index, seed=seed, seed_length=length))
        return items

    def items(self) -> list[PlanItem]:
        return [item for pair in self.language_pairs for item in self.items_for(pair)]


@dataclass
class RunResult:
    records: list[DatasetRecord] = field(default_factory=list)
    trajectories: list[Trajectory] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)


class _Conversation:
    """Growing chat history of one trajectory, with protocol re-asks."""

    def __init__(
        self,
        stack: ProviderStack,
        spec: MethodSpec,
        retry_budget: int,
        max_words: int,
        target_length: int,
        sample: int,
    ):
        self.messages: list[ChatMessage] = []
        self._stack = stack
        self._spec = spec
        self._retry_budget = retry_budget
        self._max_words = max_words
        self._target_length = target_length
        self._sample = sample

    def add_user(self, content: str) -> None:
        self.messages.append(ChatMessage("user", content))

    def add_assistant(self, content: str) -> None:
        self.messages.append(ChatMessage("assistant", content))

    def generate_source(self) -> str | None:
        """Generate, parse and length-check the next source.

        Parse misses are re-asked with a reminder up to the retry budget;
        an over-long source is re-asked once. Returns None when the budget
        is spent (the caller marks the step failed and carries the previous
        source forward).
        """
        parse_failures = 0
        length_reasks = 0
        while True:
            reply = self._stack.generate(
                self._spec.generator, self.messages, sample=self._sample
            )
            self.add_assistant(reply)
            try:
                source = parse_source(reply)
                if not source:
                    raise ParseError("SOURCE span is empty")
                if DELIMITER in source:
                    raise ParseError("source contains the delimiter")
            except ParseError:
                parse_failures += 1
                if parse_failures > self._retry_budget:
                    return None
                self.add_user(SOURCE_REMINDER)
                continue
            if len(source.split()) > self._max_words:
                if length_reasks >= 1:
                    return None
                length_reasks += 1
                self.add_user(
                    LENGTH_REMINDER.replace("{SEED_LENGTH}", str(self._target_length))
                )
                continue
            return source


def _translate_and_score(
    stack: ProviderStack, spec: MethodSpec, source: str, pair: LanguagePair
) -> tuple[dict[str, str], dict[str, ScoreSet]]:
    translations = {
        translator_id: stack.translate(translator_id, source, pair)
        for translator_id in spec.target_translators
    }
    scores = {
        translator_id: combine_scores(
            {
                scorer_id: stack.score_quality(scorer_id, source, translation, pair)
                for scorer_id in spec.scorers
            }
        )
        for translator_id, translation in translations.items()
    }
    return translations, scores


def _running_minimum(steps: list[Step]) -> float:
    values = [trajectory_difficulty(step) for step in steps if not step.failed]
    if not values:
        raise MTBreakerError("no scored step to take the running minimum from")
    return min(values)


def run_mtbreaker(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    seed: str | None = None,
    *,
    seed_length: int | None = None,
    retry_budget: int = DEFAULT_PARSE_RETRIES,
    item_index: int = 0,
) -> Trajectory:
    """One full breaking run: N mutate-translate-score iterations, then pick
    the candidate whose translation scored worst.

    The conversation starts from the rendered initial prompt; for seeded runs
    the seed enters as a synthetic assistant turn so every later step sees
    the same chat shape. Each iteration first translates and scores the
    latest source, then shows the translation(s) (plus the best score so far
    for the +qe variant) and asks for the next mutation. The final candidate
    is translated and scored too, so the argmin runs over all N+1 steps.
    """
    if spec.name != "mtbreaker":
        raise ConfigurationError(f"run_mtbreaker got method {spec.name!r}")
    if spec.seeded:
        if seed is None or not seed.strip():
            raise ValidationError("seeded mtbreaker requires a non-empty seed")
        if DELIMITER in seed:
            raise ValidationError(f"seed contains the {DELIMITER} delimiter")
        target_length = max(1, len(seed.split()))
    else:
        if seed_length is None:
            raise ValidationError("seedless mtbreaker requires a seed_length")
        target_length = seed_length

    conversation = _Conversation(
        stack,
        spec,
        retry_budget,
        max_words=MAX_LENGTH_FACTOR * target_length,
        target_length=target_length,
        sample=item_index,
    )
    conversation.add_user(render_initial(pair, target_length))
    if spec.seeded:
        assert seed is not None
        sources: list[str] = [seed]
        conversation.add_assistant(f"SOURCE |||{seed}|||")
    else:
        first = conversation.generate_source()
        if first is None:
            raise ParseError("initial source generation failed after retries")
        sources = [first]
    failed = [False]

    steps: list[Step] = []
    for i in range(1, spec.steps + 1):
        translations, scores = _translate_and_score(stack, spec, sources[-1], pair)
        steps.append(
            Step(
                index=i - 1,
                source=sources[-1],
                translations=translations,
                scores=scores,
                failed=failed[-1],
            )
        )
        qe_context = _running_minimum(steps) if spec.qe_feedback else None
        conversation.add_user(
            render_followup(translations, qe_score=qe_context, include_qe=spec.qe_feedback)
        )
        next_source = conversation.generate_source()
        if next_source is None:
            sources.append(sources[-1])
            failed.append(True)
        else:
            sources.append(next_source)
            failed.append(False)

    translations, scores = _translate_and_score(stack, spec, sources[-1], pair)
    steps.append(
        Step(
            index=spec.steps,
            source=sources[-1],
            translations=translations,
            scores=scores,
            failed=failed[-1],
        )
    )

    return Trajectory(
        method=spec,
        language_pair=pair,
        seed=seed if spec.seeded else None,
        steps=tuple(steps),
        selected=select_step(steps),
    )


def _single_shot_source(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    seed_length: int,
    retry_budget: int,
    sample: int,
    prior_sources: list[str] | None = None,
) -> str | None:
    conversation = _Conversation(
        stack,
        spec,
        retry_budget,
        max_words=MAX_LENGTH_FACTOR * seed_length,
        target_length=seed_length,
        sample=sample,
    )
    for prior in prior_sources or []:
        conversation.add_assistant(f"SOURCE |||{prior}|||")
    conversation.add_user(render_initial(pair, seed_length))
    return conversation.generate_source()


def _single_step_trajectory(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    source: str,
    seed: str | None = None,
) -> Trajectory:
    translations, scores = _translate_and_score(stack, spec, source, pair)
    step = Step(index=0, source=source, translations=translations, scores=scores)
    return Trajectory(
        method=spec, language_pair=pair, seed=seed, steps=(step,), selected=0
    )


def run_seeds(
    stack: ProviderStack, spec: MethodSpec, pair: LanguagePair, seed: str
) -> Trajectory:
    """Baseline passthrough: the seed is the test item, scored as-is."""
    if spec.name != "seeds":
        raise ConfigurationError(f"run_seeds got method {spec.name!r}")
    if not seed.strip():
        raise ValidationError("seeds method requires a non-empty seed")
    return _single_step_trajectory(stack, spec, pair, seed, seed=seed)


def run_zeroshot(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    seed_length: int,
    *,
    retry_budget: int = DEFAULT_PARSE_RETRIES,
    sample: int = 0,
) -> Trajectory:
    """One prompt, one source, one step."""
    if spec.name != "zeroshot":
        raise ConfigurationError(f"run_zeroshot got method {spec.name!r}")
    source = _single_shot_source(stack, spec, pair, seed_length, retry_budget, sample)
    if source is None:
        raise ParseError("zeroshot generation failed after retries")
    return _single_step_trajectory(stack, spec, pair, source)


def run_zeroshot_history(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    history: list[str],
    seed_length: int,
    *,
    retry_budget: int = DEFAULT_PARSE_RETRIES,
    sample: int = 0,
    window: int = DEFAULT_HISTORY_WINDOW,
) -> Trajectory:
    """Zeroshot with the last ``window`` previously generated sources shown
    as prior assistant turns (oldest first) so the model avoids repeats."""
    if spec.name != "zeroshot_history":
        raise ConfigurationError(f"run_zeroshot_history got method {spec.name!r}")
    recent = history[-window:] if window else []
    source = _single_shot_source(
        stack, spec, pair, seed_length, retry_budget, sample, prior_sources=recent
    )
    if source is None:
        raise ParseError("zeroshot (history) generation failed after retries")
    return _single_step_trajectory(stack, spec, pair, source)


def run_zeroshot_min(
    stack: ProviderStack,
    spec: MethodSpec,
    pair: LanguagePair,
    seed_length: int,
    *,
    retry_budget: int = DEFAULT_PARSE_RETRIES,
    item_index: int = 0,
) -> Trajectory:
    """k independent zeroshot generations; the worst-scoring one is selected.

    The k samples share no history and are stored as steps 0..k-1 of one
    trajectory; samples whose generation failed are kept as failed steps.
    """
    if spec.name != "zeroshot_min":
        raise ConfigurationError(f"run_zeroshot_min got method {spec.name!r}")
    steps: list[Step] = []
    for j in range(spec.samples):
        source = _single_shot_source(
            stack,
            spec,
            pair,
            seed_length,
            retry_budget,
            sample=item_index * spec.samples + j,
        )
        if source is None:
            steps.append(Step(index=j, source="", failed=True))
            continue
        translations, scores = _translate_and_score(stack, spec, source, pair)
        steps.append(Step(index=j, source=source, translations=translations, scores=scores))
    if all(step.failed for step in steps):
        raise ParseError(f"all {spec.samples} zeroshot_min samples failed")
    return Trajectory(
        method=spec, language_pair=pair, steps=tuple(steps), selected=select_step(steps)
    )


def run_item(
    stack: ProviderStack,
    plan: RunPlan,
    item: PlanItem,
    history: list[str] | None = None,
) -> Trajectory:
    """Dispatch one plan item to its method runner."""
    spec = plan.method
    if spec.name == "seeds":
        assert item.seed is not None
        return run_seeds(stack, spec, item.pair, item.seed)
    if spec.name == "zeroshot":
        return run_zeroshot(
            stack,
            spec,
            item.pair,
            item.seed_length,
            retry_budget=plan.parse_retry_budget,
            sample=item.index,
        )
    if spec.name == "zeroshot_history":
        return run_zeroshot_history(
            stack,
            spec,
            item.pair,
            history if history is not None else [],
            item.seed_length,
            retry_budget=plan.parse_retry_budget,
            sample=item.index,
            window=plan.history_window,
        )
    if spec.name == "zeroshot_min":
        return run_zeroshot_min(
            stack,
            spec,
            item.pair,
            item.seed_length,
            retry_budget=plan.parse_retry_budget,
            item_index=item.index,
        )
    if spec.name == "mtbreaker":
        return run_mtbreaker(
            stack,
            spec,
            item.pair,
            item.seed,
            seed_length=item.seed_length,
            retry_budget=plan.parse_retry_budget,
            item_index=item.index,
        )
    raise ConfigurationError(f"no runner for method {spec.name!r}")


def _log_envelope(item: PlanItem, trajectory: Trajectory) -> dict:
    entry = trajectory.to_dict()
    entry["schema"] = store.LOG_SCHEMA
    entry["item_index"] = item.index
    return entry


def _record_for(item: PlanItem, trajectory: Trajectory) -> DatasetRecord:
    return DatasetRecord(
        source=trajectory.selected_source,
        language_pair=item.pair,
        method=trajectory.method.name,
        seed=trajectory.seed,
        targets=trajectory.method.target_translators,
        trajectory_ref=item.index,
    )


def run_dataset(
    plan: RunPlan, stack: ProviderStack, log: store.RunLog | None = None
) -> RunResult:
    """Execute the plan over all items and language pairs.

    Items run concurrently up to the plan's limit, except the history
    variant, which is sequential within each pair by definition. When a log
    is given, finished trajectories are appended in plan order as they
    complete and a re-invocation with the same plan resumes after the last
    completed item. A failing item never aborts its siblings.
    """
    plan.raise_if_invalid()

    all_items = plan.items()
    done: dict[tuple[str, int, str], Trajectory] = {}
    if log is not None and log.exists():
        entries = log.load()
        completed = store.completed_keys(plan, entries)
        for entry in entries:
            payload = {k: v for k, v in entry.items() if k not in ("schema", "item_index")}
            trajectory = Trajectory.from_dict(payload)
            key = store.item_key(
                trajectory.language_pair.label, entry["item_index"], trajectory.seed
            )
            if key in completed:
                done[key] = trajectory

    def item_key_of(item: PlanItem) -> tuple[str, int, str]:
        return store.item_key(item.pair.label, item.index, item.seed)

    outcomes: dict[int, Trajectory | tuple[int, str]] = {}
    sequencer = threading.Lock()
    next_to_log = 0

    def complete(position: int, outcome: Trajectory | tuple[int, str]) -> None:
        """Record an outcome and flush the log prefix in plan order."""
        nonlocal next_to_log
        with sequencer:
            outcomes[position] = outcome
            while next_to_log in outcomes:
                item = all_items[next_to_log]
                pending = outcomes[next_to_log]
                if (
                    log is not None
                    and isinstance(pending, Trajectory)
                    and item_key_of(item) not in done
                ):
                    log.append(_log_envelope(item, pending))
                next_to_log += 1

    def execute(position: int, item: PlanItem, history: list[str] | None = None) -> None:
        key = item_key_of(item)
        if key in done:
            complete(position, done[key])
            return
        try:
            complete(position, run_item(stack, plan, item, history=history))
        except MTBreakerError as exc:
            complete(position, (position, f"{type(exc).__name__}: {exc}"))

    if plan.method.name == "zeroshot_history" or plan.concurrency == 1:
        # the history variant is sequential by definition: items feed each
        # other through the shared history of previously generated sources
        position = 0
        for pair in plan.language_pairs:
            history: list[str] = []
            for item in plan.items_for(pair):
                execute(position, item, history=history)
                outcome = outcomes[position]
                if isinstance(outcome, Trajectory):
                    history.append(outcome.selected_source)
                position += 1
    else:
        with ThreadPoolExecutor(max_workers=plan.concurrency) as pool:
            list(pool.map(execute, range(len(all_items)), all_items))

    result = RunResult()
    for position in range(len(all_items)):
        outcome = outcomes[position]
        if isinstance(outcome, Trajectory):
            result.trajectories.append(outcome)
            result.records.append(_record_for(all_items[position], outcome))
        else:
            result.failures.append(outcome)
    return result
