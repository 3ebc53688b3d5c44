"""Quantitative measures over generated test sets.

Covers the sentence-level chrF score (character 1..6-grams plus word
1..2-grams, F-beta with beta=2, effective-order handling, whitespace removed
from the character stream, case kept as-is), the pairwise diversity measures
built on top of it, uniqueness counts, descriptive length statistics,
z-normalization and t-distribution confidence intervals.

All reductions use compensated summation (math.fsum) so results do not
depend on evaluation order.
"""

from __future__ import annotations

import math
import string
import warnings
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from scipy.stats import t as _student_t

from .errors import ValidationError

_PUNCTUATION = set(string.punctuation)


@dataclass(frozen=True)
class ChrfParams:
    """chrF configuration; the defaults reproduce chrF++ behaviour
    (char order 6, word order 2, beta 2, effective order, no whitespace
    in character n-grams, case kept mixed)."""

    char_order: int = 6
    word_order: int = 2
    beta: float = 2.0
    effective_order: bool = True
    include_whitespace: bool = False
    case_fold: bool = False

    def __post_init__(self) -> None:
        if self.char_order < 1:
            raise ValidationError(f"char_order must be >= 1, got {self.char_order}")
        if self.word_order < 0:
            raise ValidationError(f"word_order must be >= 0, got {self.word_order}")
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")


DEFAULT_CHRF = ChrfParams()


def _char_ngram_counts(text: str, max_order: int, include_whitespace: bool) -> list[Counter]:
    if not include_whitespace:
        text = "".join(text.split())
    return [
        Counter(text[i : i + n] for i in range(len(text) - n + 1))
        for n in range(1, max_order + 1)
    ]


def _chrf_word_tokens(text: str) -> list[str]:
    """Whitespace tokens with one leading or trailing punctuation mark
    detached as its own token (trailing preferred, single-character tokens
    kept whole)."""
    tokens: list[str] = []
    for word in text.split():
        if len(word) == 1:
            tokens.append(word)
        elif word[-1] in _PUNCTUATION:
            tokens.extend((word[:-1], word[-1]))
        elif word[0] in _PUNCTUATION:
            tokens.extend((word[0], word[1:]))
        else:
            tokens.append(word)
    return tokens


def _word_ngram_counts(tokens: list[str], max_order: int) -> list[Counter]:
    return [
        Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
        for n in range(1, max_order + 1)
    ]


def chrf(hypothesis: str, reference: str, params: ChrfParams = DEFAULT_CHRF) -> float:
    """Sentence-level chrF score of ``hypothesis`` against ``reference``, 0-100.

    Per order, precision and recall of clipped n-gram matches are combined
    into an F-beta score; the final score macro-averages the per-order values.
    With effective-order handling the average runs over orders where both
    sides have at least one n-gram. Two texts with no n-grams at all (both
    effectively empty) count as identical and score 100; if only one side is
    empty the score is 0.
    """
    hyp = hypothesis.lower() if params.case_fold else hypothesis
    ref = reference.lower() if params.case_fold else reference

    hyp_grams = _char_ngram_counts(hyp, params.char_order, params.include_whitespace)
    ref_grams = _char_ngram_counts(ref, params.char_order, params.include_whitespace)
    if params.word_order > 0:
        hyp_grams.extend(_word_ngram_counts(_chrf_word_tokens(hyp), params.word_order))
        ref_grams.extend(_word_ngram_counts(_chrf_word_tokens(ref), params.word_order))

    factor = params.beta**2
    terms: list[float] = []
    effective = 0
    any_ngrams = False
    for hyp_counts, ref_counts in zip(hyp_grams, ref_grams):
        n_hyp = sum(hyp_counts.values())
        n_ref = sum(ref_counts.values())
        if n_hyp == 0 and n_ref == 0:
            continue
        any_ngrams = True
        n_match = sum(
            min(count, ref_counts[gram]) for gram, count in hyp_counts.items() if gram in ref_counts
        )
        precision = n_match / n_hyp if n_hyp else 0.0
        recall = n_match / n_ref if n_ref else 0.0
        denominator = factor * precision + recall
        terms.append((1 + factor) * precision * recall / denominator if denominator > 0 else 0.0)
        if n_hyp > 0 and n_ref > 0:
            effective += 1

    if not any_ngrams:
        return 100.0
    if params.effective_order:
        if effective == 0:
            return 0.0
        return 100.0 * math.fsum(terms) / effective
    return 100.0 * math.fsum(terms) / (params.char_order + params.word_order)


def symmetric_chrf(a: str, b: str, params: ChrfParams = DEFAULT_CHRF) -> float:
    """Directionless chrF: the mean of both scoring directions."""
    return (chrf(a, b, params) + chrf(b, a, params)) / 2.0


def pairwise_diversity_chrf(texts: list[str], params: ChrfParams = DEFAULT_CHRF) -> float:
    """1 minus the mean symmetrized chrF (rescaled to [0,1]) over all
    unordered text pairs. 0 means every text is identical."""
    if len(texts) < 2:
        raise ValidationError(f"pairwise diversity needs >= 2 texts, got {len(texts)}")
    scores = [
        symmetric_chrf(texts[i], texts[j], params)
        for i in range(len(texts))
        for j in range(i + 1, len(texts))
    ]
    return 1.0 - math.fsum(scores) / len(scores) / 100.0


def cosine_similarity(u: list[float], v: list[float]) -> float:
    if len(u) != len(v):
        raise ValidationError(f"vector dimensions differ: {len(u)} vs {len(v)}")
    norm_u = math.sqrt(math.fsum(x * x for x in u))
    norm_v = math.sqrt(math.fsum(x * x for x in v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ValidationError("cosine similarity undefined for a zero vector")
    return math.fsum(x * y for x, y in zip(u, v)) / (norm_u * norm_v)


def pairwise_diversity_embedding(vectors: list[list[float]]) -> float:
    """1 minus the mean pairwise cosine similarity over unordered pairs."""
    if len(vectors) < 2:
        raise ValidationError(f"pairwise diversity needs >= 2 vectors, got {len(vectors)}")
    similarities = [
        cosine_similarity(vectors[i], vectors[j])
        for i in range(len(vectors))
        for j in range(i + 1, len(vectors))
    ]
    return 1.0 - math.fsum(similarities) / len(similarities)


def unique_count(items: list[list[str]], fold: bool = True) -> int:
    """Size of the union of all strings; case-folded and trimmed when ``fold``."""
    union: set[str] = set()
    for group in items:
        for entry in group:
            union.add(entry.strip().casefold() if fold else entry)
    return len(union)


def _strip_punctuation(token: str) -> str:
    return token.strip(string.punctuation)


def vocab_size(texts: list[str]) -> int:
    """Distinct case-folded whitespace tokens across the whole set, with
    leading/trailing punctuation stripped; tokens that were punctuation-only
    do not count."""
    vocabulary: set[str] = set()
    for text in texts:
        for token in text.split():
            stripped = _strip_punctuation(token).casefold()
            if stripped:
                vocabulary.add(stripped)
    return len(vocabulary)


def length_stats(texts: list[str]) -> tuple[float, float]:
    """(mean tokens per text, mean characters per punctuation-stripped token)."""
    if not texts:
        raise ValidationError("length_stats needs at least one text")
    counts = [len(text.split()) for text in texts]
    lengths = [
        len(stripped)
        for text in texts
        for token in text.split()
        if (stripped := _strip_punctuation(token))
    ]
    avg_count = math.fsum(counts) / len(counts)
    avg_length = math.fsum(lengths) / len(lengths) if lengths else 0.0
    return avg_count, avg_length


def z_normalize(values: list[float]) -> list[float]:
    """(v - mean) / sigma with population sigma; all zeros when sigma is 0."""
    if not values:
        raise ValidationError("z_normalize needs at least one value")
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    sigma = math.sqrt(variance)
    if sigma == 0.0:
        return [0.0] * len(values)
    return [(v - mean) / sigma for v in values]


def mean_ci_t(values: list[float], level: float = 0.90) -> tuple[float, float, float]:
    """Mean with a two-sided Student-t confidence interval (sample stdev)."""
    n = len(values)
    if n < 2:
        raise ValidationError(f"confidence interval needs >= 2 values, got {n}")
    if not 0.0 < level < 1.0:
        raise ValidationError(f"confidence level must be in (0,1), got {level}")
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    quantile = float(_student_t.ppf((1.0 + level) / 2.0, n - 1))
    half_width = quantile * math.sqrt(variance) / math.sqrt(n)
    return mean, mean - half_width, mean + half_width


def scale_metricx(raw: float) -> float:
    """Map a 0-25 error score (0 = best) onto the 0-100 quality scale."""
    if raw < 0.0 or raw > 25.0:
        warnings.warn(f"raw score {raw} outside [0,25]; clamping", stacklevel=2)
        raw = min(max(raw, 0.0), 25.0)
    return 100.0 * (1.0 - raw / 25.0)


def round_half_up(value: float, ndigits: int = 0) -> float:
    """Decimal rounding with ties away from zero (0.5 -> 1), unlike the
    builtin banker's rounding."""
    quantum = Decimal(1).scaleb(-ndigits)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_decimal(value: float, ndigits: int) -> str:
    """Fixed-point string with ``ndigits`` decimals, ties rounded half-up."""
    quantum = Decimal(1).scaleb(-ndigits)
    return str(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))
