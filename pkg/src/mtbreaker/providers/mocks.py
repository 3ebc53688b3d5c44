"""Deterministic mock providers that make the whole pipeline testable offline.

The adversarial generator and the marker scorer are designed to interlock:
each breaking step appends one " @@" token to the previous source and every
marker costs 20 points, so a run produces the closed-form difficulty curve
100, 80, 60, ... with a floor at 0. The mock translator uppercases tokens
and drops marker-bearing ones, simulating omission errors.

Every mock is a pure function of its inputs except ScriptedGenerator, whose
fixture cursor advances (thread-safely) per call.
"""

from __future__ import annotations

import json
import math
import re
import threading

from ..core import LanguagePair
from ..errors import ConfigurationError
from .base import ChatMessage

_SOURCE_SPAN_RE = re.compile(r"SOURCE\s*\|\|\|(.*?)\|\|\|", re.DOTALL)
_WORD_TARGET_RE = re.compile(r"approximately (\d+) words")
# the instruction and reminder prompts carry this literal placeholder span
_PLACEHOLDER = "<SOURCE_TEXT>"


class ScriptedGenerator:
    """Replays a fixed list of replies in order; exhaustion is a test bug."""

    def __init__(self, replies: list[str]):
        if not replies:
            raise ConfigurationError("scripted generator needs at least one reply")
        self._replies = list(replies)
        self._cursor = 0
        self._lock = threading.Lock()

    def generate(self, conversation: list[ChatMessage], *, sample: int = 0) -> str:
        with self._lock:
            if self._cursor >= len(self._replies):
                raise ConfigurationError(
                    f"scripted generator exhausted after {len(self._replies)} replies"
                )
            reply = self._replies[self._cursor]
            self._cursor += 1
            return reply


class AdversarialGenerator:
    """Mock breaking LLM with a closed-form behaviour.

    First turn (no SOURCE span anywhere in the conversation yet): emit
    ``SOURCE |||<first_source>|||``, where ``first_source`` is the configured
    fixture or a fresh text honouring the prompt's "approximately N words"
    target. Every follow-up turn re-emits the latest source from the
    conversation with one extra " @@" token appended.
    """

    def __init__(self, first_source: str | None = None):
        self._first_source = first_source

    def generate(self, conversation: list[ChatMessage], *, sample: int = 0) -> str:
        previous = None
        for message in conversation:
            for match in _SOURCE_SPAN_RE.findall(message.content):
                if match.strip() != _PLACEHOLDER:
                    previous = match.strip()
        if previous is not None:
            return f"SOURCE |||{previous} @@|||"
        return f"SOURCE |||{self._fresh_text(conversation, sample)}|||"

    def _fresh_text(self, conversation: list[ChatMessage], sample: int) -> str:
        if self._first_source is not None:
            return self._first_source
        words = 8
        for message in conversation:
            target = _WORD_TARGET_RE.search(message.content)
            if target:
                words = max(int(target.group(1)), 1)
        return " ".join([f"text{sample}"] + [f"word{i}" for i in range(1, words)])


class AnalystGenerator:
    """Deterministic stand-in for the analysis LLM.

    Recognizes the source-analysis and target-analysis prompts and answers
    with fixed-shape JSON derived from the quoted text, so the annotation
    pipeline runs offline end to end.
    """

    def generate(self, conversation: list[ChatMessage], *, sample: int = 0) -> str:
        prompt = conversation[-1].content
        quoted = [
            line[2:].strip() for line in prompt.splitlines() if line.startswith("> ")
        ]
        source = quoted[0] if quoted else ""
        markers = _marker_count(source, "@@")
        if "return a list of reasons" in prompt:
            modes = ["omissions", "lexical choice"] if markers else []
            return json.dumps({"error_modes": modes})
        first_word = source.split()[0].strip('.,!?').lower() if source.split() else "misc"
        return json.dumps(
            {
                "grammaticality": max(0, 90 - 5 * markers),
                "naturalness": max(0, 80 - 10 * markers),
                "word rarity": min(100, 30 + 10 * markers),
                "syntax complexity": 50,
                "topics": [first_word, "testing"],
            }
        )


class MockTranslator:
    """Uppercase each whitespace token; drop tokens containing the marker."""

    def __init__(self, marker: str = "@@"):
        if not marker:
            raise ConfigurationError("translator marker must be non-empty")
        self._marker = marker

    def translate(self, source: str, pair: LanguagePair) -> str:
        kept = [token.upper() for token in source.split() if self._marker not in token]
        return " ".join(kept)


def _marker_count(text: str, marker: str) -> int:
    return sum(1 for token in text.split() if token == marker)


class MarkerQualityScorer:
    """Quality oracle: 100 minus ``penalty`` per marker token in the source,
    floored at 0. Ignores the translation entirely."""

    def __init__(self, marker: str = "@@", penalty: float = 20.0):
        self._marker = marker
        self._penalty = penalty

    def score_quality(self, source: str, translation: str, pair: LanguagePair) -> float:
        return max(0.0, 100.0 - self._penalty * _marker_count(source, self._marker))


class MarkerSourceScorer:
    """Source-only difficulty proxy: the marker oracle without a translation."""

    def __init__(self, marker: str = "@@", penalty: float = 20.0):
        self._marker = marker
        self._penalty = penalty

    def score_source(self, source: str, pair: LanguagePair) -> float:
        return max(0.0, 100.0 - self._penalty * _marker_count(source, self._marker))


class OverlapQualityScorer:
    """Quality oracle: 100 times the fraction of the source's case-folded
    word set that survives into the translation."""

    def score_quality(self, source: str, translation: str, pair: LanguagePair) -> float:
        source_words = {token.casefold() for token in source.split()}
        translated_words = {token.casefold() for token in translation.split()}
        if not source_words:
            return 0.0
        return 100.0 * len(source_words & translated_words) / len(source_words)


class LetterFrequencyEmbedder:
    """L2-normalized 26-dimensional letter-frequency histogram (a-z) of the
    case-folded text; anagrams embed identically. Texts without ASCII
    letters map to the zero vector."""

    dimension = 26

    def embed(self, text: str) -> list[float]:
        counts = [0] * self.dimension
        for ch in text.casefold():
            index = ord(ch) - ord("a")
            if 0 <= index < self.dimension:
                counts[index] += 1
        norm = math.sqrt(math.fsum(c * c for c in counts))
        if norm == 0.0:
            return [0.0] * self.dimension
        return [c / norm for c in counts]
