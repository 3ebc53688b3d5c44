"""Generic remote adapter for chat-style model endpoints.

One request shape (model name, message list, temperature) and one response
shape (first candidate text) cover every vendor; anything vendor-specific is
expressed in configuration (``options.response_text_path``,
``options.extra_request_fields``), never as per-vendor code paths.

Transient transport failures and 429/5xx responses are retried with
exponential backoff up to ``max_retries``; authentication failures are
non-retryable configuration errors.
"""

from __future__ import annotations

import os
import time
from typing import Any

import httpx

from ..core import LanguagePair
from ..errors import ConfigurationError, ParseError, ProviderUnavailableError
from ..prompts import SCORE_REMINDER, parse_score, render_llm_qe
from .base import ChatMessage, ProviderConfig

_RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})
_AUTH_STATUS = frozenset({401, 403})

DEFAULT_TEXT_PATH = "choices.0.message.content"
DEFAULT_EMBEDDING_PATH = "data.0.embedding"


def _walk_path(payload: Any, path: str) -> Any:
    node = payload
    for part in path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(part)
    return node


class RemoteChatClient:
    """Thin retrying POST client shared by all remote role adapters."""

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.credential_env:
            token = os.environ.get(self.config.credential_env)
            if not token:
                raise ConfigurationError(
                    f"provider {self.config.id!r}: credential env var "
                    f"{self.config.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def post(self, payload: dict) -> dict:
        last_error: str = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_ms / 1000.0 * 2 ** (attempt - 1))
            try:
                response = self._client.post(
                    self.config.endpoint, json=payload, headers=self._headers()
                )
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code in _AUTH_STATUS:
                raise ConfigurationError(
                    f"provider {self.config.id!r}: authentication failed "
                    f"(HTTP {response.status_code})"
                )
            if response.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise ProviderUnavailableError(
                    self.config.id, f"unexpected HTTP {response.status_code}"
                )
            return response.json()
        raise ProviderUnavailableError(self.config.id, last_error)

    def chat(self, conversation: list[ChatMessage]) -> str:
        payload = {
            "model": self.config.model,
            "messages": [m.to_dict() for m in conversation],
            "temperature": self.config.effective_temperature,
        }
        payload.update(self.config.options.get("extra_request_fields", {}))
        body = self.post(payload)
        path = self.config.options.get("response_text_path", DEFAULT_TEXT_PATH)
        try:
            text = _walk_path(body, path)
        except (KeyError, IndexError, ValueError):
            raise ProviderUnavailableError(
                self.config.id, f"response has no text at {path!r}"
            ) from None
        if not isinstance(text, str):
            raise ProviderUnavailableError(self.config.id, f"text at {path!r} is not a string")
        return text


class RemoteGenerator:
    def __init__(self, client: RemoteChatClient):
        self._client = client

    def generate(self, conversation: list[ChatMessage], *, sample: int = 0) -> str:
        # sample only discriminates cache keys; vendors never see it
        return self._client.chat(conversation)


class RemoteTranslator:
    """LLM-as-translator behind the generic chat shape."""

    INSTRUCTION = (
        "Translate the following text from {src} into {tgt}. "
        "Reply with the translation only.\n\n{text}"
    )

    def __init__(self, client: RemoteChatClient):
        self._client = client

    def translate(self, source: str, pair: LanguagePair) -> str:
        prompt = self.INSTRUCTION.format(
            src=pair.source_lang, tgt=pair.target_lang, text=source
        )
        return self._client.chat([ChatMessage("user", prompt)]).strip()


class RemoteQualityScorer:
    """Prompted LLM-as-QE: rubric prompt, SCORE span extraction, corrective
    re-ask on protocol misses."""

    def __init__(self, client: RemoteChatClient, parse_retries: int = 2):
        self._client = client
        self._parse_retries = parse_retries

    def score_quality(self, source: str, translation: str, pair: LanguagePair) -> float:
        conversation = [ChatMessage("user", render_llm_qe(source, translation))]
        for attempt in range(self._parse_retries + 1):
            reply = self._client.chat(conversation)
            try:
                return parse_score(reply)
            except ParseError:
                if attempt == self._parse_retries:
                    raise
                conversation.append(ChatMessage("assistant", reply))
                conversation.append(ChatMessage("user", SCORE_REMINDER))
        raise AssertionError("unreachable")


class RemoteEmbedder:
    def __init__(self, client: RemoteChatClient):
        self._client = client

    def embed(self, text: str) -> list[float]:
        payload = {"model": self._client.config.model, "input": text}
        payload.update(self._client.config.options.get("extra_request_fields", {}))
        body = self._client.post(payload)
        path = self._client.config.options.get("response_embedding_path", DEFAULT_EMBEDDING_PATH)
        try:
            vector = _walk_path(body, path)
        except (KeyError, IndexError, ValueError):
            raise ProviderUnavailableError(
                self._client.config.id, f"response has no embedding at {path!r}"
            ) from None
        return [float(v) for v in vector]
