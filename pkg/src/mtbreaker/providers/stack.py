"""Uniform front door for all provider calls.

The stack owns the id -> provider table, enforces call preconditions and
role/kind agreement, bounds in-flight calls with one run-level semaphore and
transparently caches responses keyed by canonical request content. With a
warm cache no provider is contacted and outputs are byte-identical to the
first run.

Generation requests carry a ``sample`` index that participates in the cache
key (but is never sent to a vendor): intentionally independent samples of the
same prompt must not collapse into one cached response.
"""

from __future__ import annotations

import json
import threading

from ..core import LanguagePair
from ..errors import ConfigurationError, ValidationError
from ..store import CacheKey, ResponseCache
from .base import ChatMessage, ProviderConfig

DEFAULT_CONCURRENCY = 8


class ProviderStack:
    def __init__(
        self,
        providers: dict[str, tuple[ProviderConfig, object]],
        cache: ResponseCache | None = None,
        concurrency: int = DEFAULT_CONCURRENCY,
    ):
        if concurrency < 1:
            raise ConfigurationError(f"concurrency must be >= 1, got {concurrency}")
        self._providers = dict(providers)
        self._cache = cache
        self._gate = threading.BoundedSemaphore(concurrency)

    def config(self, provider_id: str) -> ProviderConfig:
        return self._lookup(provider_id)[0]

    @property
    def provider_ids(self) -> list[str]:
        return sorted(self._providers)

    def _lookup(self, provider_id: str) -> tuple[ProviderConfig, object]:
        try:
            return self._providers[provider_id]
        except KeyError:
            raise ConfigurationError(f"no provider configured under id {provider_id!r}") from None

    def _require_kind(self, provider_id: str, kind: str) -> tuple[ProviderConfig, object]:
        config, provider = self._lookup(provider_id)
        if config.kind != kind:
            raise ConfigurationError(
                f"provider {provider_id!r} has kind {config.kind!r}, expected {kind!r}"
            )
        return config, provider

    def _cached_call(self, config: ProviderConfig, request: dict, call) -> str:
        key = CacheKey.from_request(config.id, request)
        if self._cache is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        with self._gate:
            response = call()
        if self._cache is not None:
            self._cache.put(key, response, request=request)
        return response

    def generate(
        self, generator_id: str, conversation: list[ChatMessage], *, sample: int = 0
    ) -> str:
        """Raw completion for a conversation; the caller parses it."""
        if not conversation:
            raise ValidationError("generate needs a non-empty conversation")
        if conversation[-1].role != "user":
            raise ValidationError("generate conversation must end with a user message")
        config, provider = self._require_kind(generator_id, "generator")
        request = {
            "op": "generate",
            "model": config.model or config.id,
            "temperature": config.effective_temperature,
            "messages": [m.to_dict() for m in conversation],
            "sample": sample,
        }
        return self._cached_call(
            config, request, lambda: provider.generate(list(conversation), sample=sample)
        )

    def translate(self, translator_id: str, source: str, pair: LanguagePair) -> str:
        if not source:
            raise ValidationError("translate needs a non-empty source")
        config, provider = self._require_kind(translator_id, "translator")
        request = {
            "op": "translate",
            "model": config.model or config.id,
            "temperature": config.effective_temperature,
            "source": source,
            "source_lang": pair.source_lang,
            "target_lang": pair.target_lang,
        }
        return self._cached_call(config, request, lambda: provider.translate(source, pair))

    def score_quality(
        self, scorer_id: str, source: str, translation: str, pair: LanguagePair
    ) -> float:
        if not source or not translation:
            raise ValidationError("score_quality needs non-empty source and translation")
        config, provider = self._require_kind(scorer_id, "quality_scorer")
        request = {
            "op": "score_quality",
            "model": config.model or config.id,
            "temperature": config.effective_temperature,
            "source": source,
            "translation": translation,
            "source_lang": pair.source_lang,
            "target_lang": pair.target_lang,
        }
        response = self._cached_call(
            config,
            request,
            lambda: json.dumps(provider.score_quality(source, translation, pair)),
        )
        return self._score_value(scorer_id, response)

    def score_source(self, scorer_id: str, source: str, pair: LanguagePair) -> float:
        if not source:
            raise ValidationError("score_source needs a non-empty source")
        config, provider = self._require_kind(scorer_id, "source_scorer")
        request = {
            "op": "score_source",
            "model": config.model or config.id,
            "temperature": config.effective_temperature,
            "source": source,
            "source_lang": pair.source_lang,
            "target_lang": pair.target_lang,
        }
        response = self._cached_call(
            config, request, lambda: json.dumps(provider.score_source(source, pair))
        )
        return self._score_value(scorer_id, response)

    def embed(self, embedder_id: str, text: str) -> list[float]:
        if not text:
            raise ValidationError("embed needs non-empty text")
        config, provider = self._require_kind(embedder_id, "embedder")
        request = {
            "op": "embed",
            "model": config.model or config.id,
            "text": text,
        }
        response = self._cached_call(
            config, request, lambda: json.dumps(provider.embed(text))
        )
        vector = json.loads(response)
        if not isinstance(vector, list):
            raise ValidationError(f"embedder {embedder_id!r} returned a non-vector")
        return [float(v) for v in vector]

    @staticmethod
    def _score_value(scorer_id: str, response: str) -> float:
        value = float(json.loads(response))
        if not 0.0 <= value <= 100.0:
            raise ValidationError(f"scorer {scorer_id!r} returned {value}, outside [0,100]")
        return value
