"""Prompt templates, their parameter filling, and strict response parsing.

Templates live as plain-text resources with ``{PLACEHOLDER}`` markers and are
pinned byte-for-byte by golden tests. Structured replies come back through a
regex protocol: generated sources as ``SOURCE |||...|||`` spans, quality
judgements as ``SCORE |||...|||`` spans, and analysis results as JSON objects.
Parsing always takes the LAST span because models like to restate the pattern
while reasoning before the final answer.

Texts containing the ``|||`` delimiter cannot round-trip through the protocol;
callers reject and re-ask instead of escaping.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources

from .core import SourceAnalysis
from .errors import ParseError, ValidationError
from .metrics import format_decimal

__all__ = [
    "SourceAnalysis",
    "ErrorModeReport",
    "render_initial",
    "render_followup",
    "render_llm_qe",
    "render_source_analysis",
    "render_target_analysis",
    "parse_source",
    "parse_score",
    "parse_source_analysis",
    "parse_target_analysis",
    "SOURCE_REMINDER",
    "LENGTH_REMINDER",
    "SCORE_REMINDER",
    "ANALYSIS_REMINDER",
]

DELIMITER = "|||"

# Corrective lines appended when a reply misses the protocol (not part of the
# published templates).
SOURCE_REMINDER = (
    "Your previous reply did not contain the required pattern. "
    "End your response with SOURCE |||<SOURCE_TEXT>|||."
)
LENGTH_REMINDER = (
    "The source text is too long. Keep it to approximately {SEED_LENGTH} words "
    "and end your response with SOURCE |||<SOURCE_TEXT>|||."
)
SCORE_REMINDER = (
    "Your previous reply did not contain the required pattern. "
    "End your response with a single line like SCORE |||70.8|||."
)
ANALYSIS_REMINDER = (
    "Your previous reply was not a valid answer for this task. "
    "Provide only the JSON object and nothing else."
)

_SOURCE_RE = re.compile(r"SOURCE\s*\|\|\|(.*?)\|\|\|", re.DOTALL)
_SCORE_RE = re.compile(r"SCORE\s*\|\|\|(.*?)\|\|\|", re.DOTALL)


def _template(name: str) -> str:
    text = (resources.files("mtbreaker") / "templates" / f"{name}.txt").read_text("utf-8")
    return text.removesuffix("\n")


@dataclass(frozen=True)
class ErrorModeReport:
    """Reasons a translation might be wrong, lowercased and de-duplicated."""

    error_modes: tuple[str, ...]

    def __post_init__(self) -> None:
        if any(not mode for mode in self.error_modes):
            raise ValidationError("error modes must be non-empty strings")
        if len(set(self.error_modes)) != len(self.error_modes):
            raise ValidationError("error modes must be de-duplicated")


def render_initial(pair, seed_length: int) -> str:
    """First prompt of every method: ask for a hard-to-translate text of
    roughly ``seed_length`` words in the pair's source language."""
    if seed_length < 1:
        raise ValidationError(f"seed_length must be >= 1, got {seed_length}")
    return (
        _template("initial")
        .replace("{LANG1}", pair.source_lang)
        .replace("{LANG2}", pair.target_lang)
        .replace("{SEED_LENGTH}", str(seed_length))
    )


def _translation_block(translations: dict[str, str]) -> str:
    # Single target keeps the bare published wording; the Multi variant tags
    # each line with its translator id, in configuration order.
    if len(translations) == 1:
        text = next(iter(translations.values()))
        return f"TRANSLATION |||{text}|||"
    return "\n".join(
        f"TRANSLATION ({translator_id}) |||{text}|||"
        for translator_id, text in translations.items()
    )


def render_followup(
    translations: dict[str, str],
    qe_score: float | None = None,
    include_qe: bool = False,
) -> str:
    """Follow-up turn showing the latest translation(s) and, for the +qe
    variant, the best (lowest) score so far with one decimal and a % sign."""
    if not translations:
        raise ValidationError("follow-up needs at least one translation")
    block = _translation_block(translations)
    if include_qe:
        if qe_score is None:
            raise ValidationError("include_qe requires a qe_score")
        return (
            _template("followup_qe")
            .replace("{TRANSLATION_BLOCK}", block)
            .replace("{QE_SCORE}", format_decimal(qe_score, 1))
        )
    return _template("followup").replace("{TRANSLATION_BLOCK}", block)


def render_llm_qe(source: str, translation: str) -> str:
    """Prompted LLM-as-QE rubric for one source/translation pair."""
    if not source or not translation:
        raise ValidationError("LLM-as-QE needs non-empty source and translation")
    return (
        _template("llm_qe")
        .replace("{SOURCE_TEXT}", source)
        .replace("{TARGET_TEXT}", translation)
    )


def render_source_analysis(source: str) -> str:
    if not source:
        raise ValidationError("source analysis needs a non-empty source")
    return _template("source_analysis").replace("{SOURCE_TEXT}", source)


def render_target_analysis(source: str, translation: str) -> str:
    if not source or not translation:
        raise ValidationError("target analysis needs non-empty source and translation")
    return (
        _template("target_analysis")
        .replace("{SOURCE_TEXT}", source)
        .replace("{TARGET_TEXT}", translation)
    )


def parse_source(response: str) -> str:
    """Content of the last ``SOURCE |||...|||`` span, whitespace-trimmed."""
    matches = _SOURCE_RE.findall(response)
    if not matches:
        raise ParseError("no SOURCE |||...||| span in response")
    return matches[-1].strip()


def parse_score(response: str) -> float:
    """Number in the last ``SCORE |||...|||`` span, clamped into [0,100].

    A trailing percent sign inside the span is tolerated (the follow-up
    prompt itself formats scores that way).
    """
    matches = _SCORE_RE.findall(response)
    if not matches:
        raise ParseError("no SCORE |||...||| span in response")
    raw = matches[-1].strip().removesuffix("%").strip()
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"SCORE span is not a number: {raw!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise ParseError(f"SCORE span is not a finite number: {raw!r}")
    return min(max(value, 0.0), 100.0)


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*|\s*```$")
_TRAILING_COMMA_RE = re.compile(r",\s*([}\]])")


def _lenient_json_object(response: str) -> dict:
    """Parse a JSON object out of an LLM reply, tolerating surrounding code
    fences, stray prose and trailing commas, but nothing structural."""
    text = _FENCE_RE.sub("", response.strip())
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ParseError("no JSON object in response")
    text = _TRAILING_COMMA_RE.sub(r"\1", text[start : end + 1])
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in response: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError("response JSON is not an object")
    return payload


def parse_source_analysis(response: str) -> SourceAnalysis:
    """Validate the five-key source-analysis object (spaced key variants like
    "word rarity" are normalized to underscores)."""
    payload = _lenient_json_object(response)
    normalized = {str(k).strip().lower().replace(" ", "_"): v for k, v in payload.items()}
    required = ("grammaticality", "naturalness", "word_rarity", "syntax_complexity", "topics")
    missing = [key for key in required if key not in normalized]
    if missing:
        raise ParseError(f"source analysis missing keys: {', '.join(missing)}")
    topics = normalized["topics"]
    if not isinstance(topics, list) or not all(isinstance(t, str) for t in topics):
        raise ParseError("topics must be a list of strings")
    for key in required[:4]:
        if not isinstance(normalized[key], (int, float)) or isinstance(normalized[key], bool):
            raise ParseError(f"{key} must be a number, got {normalized[key]!r}")
    try:
        return SourceAnalysis(
            grammaticality=float(normalized["grammaticality"]),
            naturalness=float(normalized["naturalness"]),
            word_rarity=float(normalized["word_rarity"]),
            syntax_complexity=float(normalized["syntax_complexity"]),
            topics=tuple(topic.strip() for topic in topics),
        )
    except ValidationError as exc:
        raise ParseError(str(exc)) from None


def parse_target_analysis(response: str) -> ErrorModeReport:
    """Read the ``error_modes`` list; lowercase, trim and de-duplicate it.

    Modes outside the prompt's suggested taxonomy are accepted, and an empty
    list is a valid answer (a clean translation has no error modes).
    """
    payload = _lenient_json_object(response)
    if "error_modes" not in payload:
        raise ParseError("target analysis missing key: error_modes")
    raw_modes = payload["error_modes"]
    if not isinstance(raw_modes, list) or not all(isinstance(m, str) for m in raw_modes):
        raise ParseError("error_modes must be a list of strings")
    seen: dict[str, None] = {}
    for mode in raw_modes:
        cleaned = mode.strip().lower()
        if cleaned:
            seen.setdefault(cleaned, None)
    return ErrorModeReport(error_modes=tuple(seen))
