"""Provider contracts, deterministic mocks, remote adapter and the stack."""

from .base import (
    ChatMessage,
    Embedder,
    Generator,
    ProviderConfig,
    QualityScorer,
    SourceScorer,
    Translator,
)
from .registry import build_provider, build_stack, load_provider_configs
from .stack import DEFAULT_CONCURRENCY, ProviderStack

__all__ = [
    "ChatMessage",
    "ProviderConfig",
    "Generator",
    "Translator",
    "QualityScorer",
    "SourceScorer",
    "Embedder",
    "ProviderStack",
    "DEFAULT_CONCURRENCY",
    "build_provider",
    "build_stack",
    "load_provider_configs",
]
