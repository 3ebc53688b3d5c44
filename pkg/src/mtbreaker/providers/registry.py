"""Build provider instances and whole stacks from configuration entries."""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ConfigurationError
from ..store import ResponseCache
from . import mocks
from .base import ProviderConfig
from .remote import (
    RemoteChatClient,
    RemoteEmbedder,
    RemoteGenerator,
    RemoteQualityScorer,
    RemoteTranslator,
)
from .stack import DEFAULT_CONCURRENCY, ProviderStack

_REMOTE_ROLES = {
    "generator": RemoteGenerator,
    "translator": RemoteTranslator,
    "quality_scorer": RemoteQualityScorer,
    "embedder": RemoteEmbedder,
}


def build_provider(config: ProviderConfig) -> object:
    adapter, kind, options = config.adapter, config.kind, config.options
    if adapter == "remote":
        if kind not in _REMOTE_ROLES:
            raise ConfigurationError(
                f"provider {config.id!r}: no remote adapter for kind {kind!r} "
                "(the source-only scorer ships as a pluggable contract with a mock)"
            )
        return _REMOTE_ROLES[kind](RemoteChatClient(config))
    if adapter == "mock:adversarial" and kind == "generator":
        return mocks.AdversarialGenerator(first_source=options.get("first_source"))
    if adapter == "mock:scripted" and kind == "generator":
        replies = options.get("replies")
        if replies is None and options.get("replies_file"):
            replies = json.loads(Path(options["replies_file"]).read_text("utf-8"))
        if not isinstance(replies, list):
            raise ConfigurationError(
                f"provider {config.id!r}: scripted mock needs options.replies "
                "or options.replies_file"
            )
        return mocks.ScriptedGenerator(replies)
    if adapter == "mock:analyst" and kind == "generator":
        return mocks.AnalystGenerator()
    if adapter == "mock:uppercase" and kind == "translator":
        return mocks.MockTranslator(marker=options.get("drop_marker", "@@"))
    if adapter == "mock:marker" and kind == "quality_scorer":
        return mocks.MarkerQualityScorer(
            marker=options.get("marker", "@@"), penalty=options.get("penalty", 20.0)
        )
    if adapter == "mock:marker" and kind == "source_scorer":
        return mocks.MarkerSourceScorer(
            marker=options.get("marker", "@@"), penalty=options.get("penalty", 20.0)
        )
    if adapter == "mock:overlap" and kind == "quality_scorer":
        return mocks.OverlapQualityScorer()
    if adapter == "mock:letterhist" and kind == "embedder":
        return mocks.LetterFrequencyEmbedder()
    raise ConfigurationError(
        f"provider {config.id!r}: no adapter {adapter!r} for kind {kind!r}"
    )


def build_stack(
    configs: list[ProviderConfig],
    cache: ResponseCache | None = None,
    concurrency: int = DEFAULT_CONCURRENCY,
) -> ProviderStack:
    providers: dict[str, tuple[ProviderConfig, object]] = {}
    for config in configs:
        if config.id in providers:
            raise ConfigurationError(f"duplicate provider id {config.id!r}")
        providers[config.id] = (config, build_provider(config))
    return ProviderStack(providers, cache=cache, concurrency=concurrency)


def load_provider_configs(entries: list[dict]) -> list[ProviderConfig]:
    return [ProviderConfig.from_dict(entry) for entry in entries]
