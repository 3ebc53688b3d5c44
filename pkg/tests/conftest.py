from __future__ import annotations

import pytest

from mtbreaker.core import LanguagePair, MethodSpec
from mtbreaker.providers import ProviderConfig, ProviderStack, build_stack
from mtbreaker.store import ResponseCache


MOCK_CONFIGS = [
    ProviderConfig(id="gen", kind="generator", adapter="mock:adversarial"),
    ProviderConfig(id="analyst", kind="generator", adapter="mock:analyst"),
    ProviderConfig(id="mt", kind="translator", adapter="mock:uppercase"),
    ProviderConfig(id="qe", kind="quality_scorer", adapter="mock:marker"),
    ProviderConfig(id="overlap", kind="quality_scorer", adapter="mock:overlap"),
    ProviderConfig(id="srcqe", kind="source_scorer", adapter="mock:marker"),
    ProviderConfig(id="embd", kind="embedder", adapter="mock:letterhist"),
]


@pytest.fixture
def encs() -> LanguagePair:
    return LanguagePair("English", "Czech")


@pytest.fixture
def ende() -> LanguagePair:
    return LanguagePair("English", "German")


@pytest.fixture
def mock_stack() -> ProviderStack:
    return build_stack(MOCK_CONFIGS)


@pytest.fixture
def cached_mock_stack(tmp_path) -> ProviderStack:
    return build_stack(MOCK_CONFIGS, cache=ResponseCache(tmp_path / "cache"))


def mtb_spec(steps: int = 3, *, seeded: bool = True, qe: bool = False,
             translators: tuple[str, ...] = ("mt",)) -> MethodSpec:
    return MethodSpec(
        name="mtbreaker",
        steps=steps,
        seeded=seeded,
        qe_feedback=qe,
        target_translators=translators,
        scorers=("qe",),
        generator="gen",
    )


class CountingStack:
    """Delegating wrapper that counts provider-facing calls (cache hits
    still count as stack calls; use provider-level doubles for raw call
    counts)."""

    def __init__(self, inner: ProviderStack):
        self.inner = inner
        self.calls = 0

    def __getattr__(self, name):
        attr = getattr(self.inner, name)
        if callable(attr):
            def wrapper(*args, **kwargs):
                self.calls += 1
                return attr(*args, **kwargs)
            return wrapper
        return attr
