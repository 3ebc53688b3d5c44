"""Contracts for every external model role.

A provider is one concrete backend (a mock rule or a remote endpoint) bound
to a :class:`ProviderConfig`. The engine never talks to providers directly;
it goes through :class:`~mtbreaker.providers.stack.ProviderStack`, which adds
caching, precondition checks and the run-level concurrency limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from ..core import MODEL_KINDS, LanguagePair
from ..errors import ValidationError

CHAT_ROLES = ("system", "user", "assistant")

# Sampling defaults: diverse generation, stable scoring.
DEFAULT_GENERATOR_TEMPERATURE = 1.0
DEFAULT_SCORER_TEMPERATURE = 0.0


@dataclass(frozen=True)
class ChatMessage:
    """One turn of a chat-style conversation."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in CHAT_ROLES:
            raise ValidationError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise ValidationError("chat message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ProviderConfig:
    """Configuration of one provider behind a model id.

    ``adapter`` picks the implementation ("remote", "mock:adversarial", ...);
    remote entries additionally need ``endpoint`` and usually
    ``credential_env`` (credentials are only ever read from the environment,
    never stored in files). ``options`` carries adapter-specific knobs such
    as mock fixtures or remote response field paths.
    """

    id: str
    kind: str
    adapter: str
    endpoint: str = ""
    credential_env: str = ""
    model: str = ""
    temperature: float | None = None
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_ms: float = 250.0
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("provider id must be non-empty")
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"provider {self.id!r}: unknown kind {self.kind!r}")
        if not 0 <= self.max_retries <= 10:
            raise ValidationError(
                f"provider {self.id!r}: max_retries must be in [0,10], got {self.max_retries}"
            )
        if self.timeout_s <= 0:
            raise ValidationError(f"provider {self.id!r}: timeout must be > 0")
        if self.adapter == "remote" and not self.endpoint:
            raise ValidationError(f"provider {self.id!r}: remote adapter needs an endpoint")

    @property
    def effective_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        if self.kind == "generator":
            return DEFAULT_GENERATOR_TEMPERATURE
        return DEFAULT_SCORER_TEMPERATURE

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "adapter": self.adapter,
            "endpoint": self.endpoint,
            "credential_env": self.credential_env,
            "model": self.model,
            "temperature": self.temperature,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "backoff_ms": self.backoff_ms,
            "options": dict(self.options),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(
                f"provider entry has unknown keys: {', '.join(sorted(unknown))}"
            )
        return cls(**d)


@runtime_checkable
class Generator(Protocol):
    def generate(self, conversation: list[ChatMessage], *, sample: int = 0) -> str: ...


@runtime_checkable
class Translator(Protocol):
    def translate(self, source: str, pair: LanguagePair) -> str: ...


@runtime_checkable
class QualityScorer(Protocol):
    def score_quality(self, source: str, translation: str, pair: LanguagePair) -> float: ...


@runtime_checkable
class SourceScorer(Protocol):
    def score_source(self, source: str, pair: LanguagePair) -> float: ...


@runtime_checkable
class Embedder(Protocol):
    def embed(self, text: str) -> list[float]: ...
