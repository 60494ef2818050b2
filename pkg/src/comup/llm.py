"""LLM execution: chat-completions HTTP backend, deterministic mock,
and an append-only response cache."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    AuthError,
    CacheIntegrityError,
    ConfigurationError,
    ContractError,
    MalformedReplyError,
    RateLimitError,
    TransportError,
)
from .prompt import PROMPT_VERSION

DEFAULT_MAX_TOKENS = 256


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    prompt: str
    temperature: float
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: int | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ContractError("prompt must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ContractError("temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise ContractError("max_tokens must be positive")

    def cache_key(self, prompt_version: str = PROMPT_VERSION) -> str:
        """256-bit hex key over the canonical request plus prompt version."""
        canonical = json.dumps(
            {
                "model_id": self.model_id,
                "prompt": self.prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
                "seed": self.seed,
                "prompt_version": prompt_version,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Backend:
    """Abstract completion backend."""

    def complete(self, req: CompletionRequest) -> str:
        raise NotImplementedError


class MockBackend(Backend):
    """Deterministic test backend.

    ``fixtures`` maps (model_id, prompt) to the reply; alternatively a
    ``responder`` callable computes the reply from the request. Requests
    for a model outside ``models`` fail with a configuration error.
    """

    def __init__(self, fixtures: dict | None = None, responder=None,
                 models: set[str] | None = None):
        self.fixtures = dict(fixtures or {})
        self.responder = responder
        if models is not None:
            self.models = set(models)
        else:
            self.models = {m for m, _ in self.fixtures}
        self.calls = 0

    @classmethod
    def from_fixture_file(cls, path: str | Path) -> "MockBackend":
        fixtures = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    fixtures[(rec["model_id"], rec["prompt"])] = rec["response"]
        return cls(fixtures=fixtures)

    def complete(self, req: CompletionRequest) -> str:
        if self.models and req.model_id not in self.models:
            raise ConfigurationError(
                f"mock backend has no fixtures for model {req.model_id!r}"
            )
        self.calls += 1
        key = (req.model_id, req.prompt)
        if key in self.fixtures:
            return self.fixtures[key]
        if self.responder is not None:
            return self.responder(req)
        raise ConfigurationError(
            f"mock backend has no fixture for this prompt (model {req.model_id!r})"
        )


class HttpChatBackend(Backend):
    """Chat-completions wire protocol over HTTP.

    The rendered prompt (which embeds its own system-role text) is sent as
    a single user message. Transient failures are retried up to
    ``max_retries`` times with exponential backoff.
    """

    def __init__(self, endpoint: str, api_key_env: str = "COMUP_API_KEY",
                 max_retries: int = 3, backoff_base: float = 1.0,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.timeout = timeout

    def complete(self, req: CompletionRequest) -> str:
        import requests  # noqa: PLC0415

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"backend credential env var {self.api_key_env} is not set"
            )
        payload = {
            "model": req.model_id,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    self.endpoint,
                    json=payload,
                    headers={"Authorization": f"Bearer {api_key}"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_exc = TransportError(f"request failed: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"backend rejected credential (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = RateLimitError(
                    f"transient backend failure (HTTP {resp.status_code})"
                )
                continue
            if resp.status_code != 200:
                raise TransportError(f"backend returned HTTP {resp.status_code}")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedReplyError(f"unparseable backend reply: {exc}") from exc
            if text is None:
                raise MalformedReplyError("backend reply has null content")
            return text
        raise last_exc if last_exc is not None else TransportError("retries exhausted")


def complete(req: CompletionRequest, backend: Backend) -> str:
    return backend.complete(req)


class ResponseCache:
    """Append-only completion cache keyed by the canonical request hash."""

    def __init__(self, path: str | Path, prompt_version: str = PROMPT_VERSION):
        self.path = Path(path)
        self.prompt_version = prompt_version
        self._entries: dict[str, str] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key, response = rec["key"], rec["response"]
                except (ValueError, KeyError) as exc:
                    raise CacheIntegrityError(
                        f"{self.path}:{lineno}: corrupt cache record: {exc}",
                        key=None,
                    ) from exc
                if key in self._entries and self._entries[key] != response:
                    raise CacheIntegrityError(
                        f"{self.path}:{lineno}: conflicting entries for key",
                        key=key,
                    )
                self._entries[key] = response

    def __len__(self):
        return len(self._entries)

    def get(self, req: CompletionRequest) -> str | None:
        return self._entries.get(req.cache_key(self.prompt_version))

    def put(self, req: CompletionRequest, response: str) -> None:
        key = req.cache_key(self.prompt_version)
        self._entries[key] = response
        self.path.parent.mkdir(parents=True, exist_ok=True)
        record = {
            "key": key,
            "model_id": req.model_id,
            "prompt_sha": hashlib.sha256(req.prompt.encode("utf-8")).hexdigest(),
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "seed": req.seed,
            "prompt_version": self.prompt_version,
            "response": response,
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def cached_complete(req: CompletionRequest, backend: Backend,
                    cache: ResponseCache) -> str:
    hit = cache.get(req)
    if hit is not None:
        return hit
    response = backend.complete(req)
    cache.put(req, response)
    return response
