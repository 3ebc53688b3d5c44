"""Content-addressed response cache, append-only run logs, resume planning.

Cache layout is one JSON file per entry under a two-level hex fan-out keyed
by the request digest, so individual model transcripts stay greppable.
Entries are write-once: the first writer wins and re-putting different bytes
for the same key is an integrity error.

Run logs are JSON-lines files, one schema-versioned trajectory envelope per
line, appended through a single serialized writer.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from .errors import CacheIntegrityError, MTBreakerError, ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .engine import PlanItem, RunPlan

LOG_SCHEMA = 1
CACHE_DIR_ENV = "MTB_CACHE_DIR"


def canonical_json(payload: Any) -> str:
    """Stable serialization used for digests: sorted keys, tight separators,
    content whitespace preserved."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheKey:
    provider_id: str
    digest: str

    @classmethod
    def from_request(cls, provider_id: str, request: dict) -> "CacheKey":
        if not provider_id:
            raise ValidationError("cache key needs a provider id")
        return cls(provider_id=provider_id, digest=digest_text(canonical_json(request)))

    def __str__(self) -> str:
        return f"{self.provider_id}:{self.digest[:12]}"


class ResponseCache:
    """Filesystem cache mapping request digests to exact response strings."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _entry_path(self, key: CacheKey) -> Path:
        d = key.digest
        return self.root / d[:2] / d[2:4] / f"{d}.json"

    def get(self, key: CacheKey) -> str | None:
        path = self._entry_path(key)
        if not path.exists():
            return None
        try:
            entry = json.loads(path.read_text("utf-8"))
            response = entry["response"]
        except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
            raise CacheIntegrityError(str(key), f"corrupt entry at {path}: {exc}") from None
        if not isinstance(response, str):
            raise CacheIntegrityError(str(key), "response field is not a string")
        return response

    def put(self, key: CacheKey, response: str, request: dict | None = None) -> None:
        path = self._entry_path(key)
        existing = self.get(key)
        if existing is not None:
            if existing != response:
                raise CacheIntegrityError(
                    str(key), "conflicting bytes for an already-cached request"
                )
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "schema": 1,
            "provider": key.provider_id,
            "request": request,
            "response": response,
        }
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{threading.get_ident()}")
        tmp.write_text(json.dumps(entry, ensure_ascii=False, indent=1), "utf-8")
        try:
            # hard link = atomic create-if-absent; first writer wins
            os.link(tmp, path)
        except FileExistsError:
            racer = self.get(key)
            if racer is not None and racer != response:
                raise CacheIntegrityError(
                    str(key), "concurrent writers stored different bytes"
                ) from None
        finally:
            tmp.unlink(missing_ok=True)


def cache_from_env(configured: str | Path | None) -> ResponseCache | None:
    """Build a cache from an explicit path, honouring the env-var override."""
    root = os.environ.get(CACHE_DIR_ENV) or configured
    return ResponseCache(root) if root else None


class RunLog:
    """Append-only JSON-lines log with a single serialized writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def exists(self) -> bool:
        return self.path.exists()

    def append(self, entry: dict) -> None:
        line = canonical_json(entry)
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()

    def load(self) -> list[dict]:
        """Parse every line; a truncated final line (crash artifact) is
        dropped, anything else malformed is an error."""
        if not self.path.exists():
            return []
        entries: list[dict] = []
        lines = self.path.read_text("utf-8").splitlines()
        for number, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError:
                if number == len(lines) - 1:
                    break
                raise MTBreakerError(f"{self.path}: malformed log line {number + 1}")
        return entries


def seed_digest(seed: str | None) -> str:
    return digest_text(seed if seed is not None else "")


def item_key(pair_label: str, item_index: int, seed: str | None) -> tuple[str, int, str]:
    return (pair_label, item_index, seed_digest(seed))


def completed_keys(plan: "RunPlan", entries: list[dict]) -> set[tuple[str, int, str]]:
    """Keys of items already finished in a log, refusing logs written under a
    different method configuration."""
    plan_method_digest = digest_text(plan.method.digest_source())
    keys: set[tuple[str, int, str]] = set()
    for entry in entries:
        if entry.get("schema") != LOG_SCHEMA:
            raise ValidationError(f"log entry has unsupported schema {entry.get('schema')!r}")
        method_digest = digest_text(canonical_json(entry["method"]))
        if method_digest != plan_method_digest:
            raise ValidationError(
                "refusing to resume: log was written by a different method configuration"
            )
        pair = entry["language_pair"]
        label = f"{pair['source_lang']}-{pair['target_lang']}"
        keys.add(item_key(label, entry["item_index"], entry.get("seed")))
    return keys


def resume_plan(plan: "RunPlan", log: RunLog) -> list["PlanItem"]:
    """Planned items minus those with a completed trajectory in the log."""
    done = completed_keys(plan, log.load())
    return [
        item
        for item in plan.items()
        if item_key(item.pair.label, item.index, item.seed) not in done
    ]
