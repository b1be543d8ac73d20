"""Provider configs and thin HTTP adapters for chat-completion style APIs."""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx

DEFAULT_TIMEOUT = 120.0

DEFAULT_BASE_URLS = {
    "anthropic": "https://api.anthropic.com",
    "mistral": "https://api.mistral.ai",
    "gemini": "https://generativelanguage.googleapis.com",
    "openai": "https://api.openai.com",
}


class TransientError(RuntimeError):
    """Retryable failure: timeouts, 429, 5xx."""


class PermanentError(RuntimeError):
    """Non-retryable failure such as a 4xx or malformed response."""


class MissingCredential(RuntimeError):
    def __init__(self, provider: str, env_var: str):
        super().__init__(f"provider {provider!r}: environment variable {env_var} is not set")
        self.provider = provider
        self.env_var = env_var


@dataclass(frozen=True)
class Provider:
    name: str
    kind: str = "mock"
    model: str = ""
    base_url: str | None = None
    credential_env: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    params: dict[str, Any] = field(default_factory=dict)
    options: dict[str, Any] = field(default_factory=dict)

    @property
    def model_id(self) -> str:
        return self.model or self.name

    @property
    def is_live(self) -> bool:
        return self.kind != "mock"

    @classmethod
    def from_config(cls, item: dict[str, Any]) -> "Provider":
        known = {"name", "kind", "model", "base_url", "credential_env", "timeout", "params"}
        cred = item.get("credential_env")
        if cred is not None and not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", str(cred)):
            raise ValueError(f"provider {item.get('name')!r}: credential_env must name an environment variable")
        return cls(
            name=str(item["name"]),
            kind=str(item.get("kind", "mock")),
            model=str(item.get("model", "")),
            base_url=item.get("base_url"),
            credential_env=cred,
            timeout=float(item.get("timeout", DEFAULT_TIMEOUT)),
            params=dict(item.get("params") or {}),
            options={k: v for k, v in item.items() if k not in known},
        )


class Client(Protocol):
    calls: int

    def complete(self, prompt: str) -> str: ...


_SENTENCE_RE = re.compile(r"(?<=[.!?])\s+")


def reverse_sentences(text: str) -> str:
    """The mock paraphrase: same words, sentences in reverse order."""
    parts = [s for s in _SENTENCE_RE.split(text.strip()) if s]
    return " ".join(reversed(parts))


class MockClient:
    """Offline stand-in for a live model.

    Options: ``fail_times`` transient failures per prompt before succeeding,
    ``always_fail``, and ``refuse`` (answers with a refusal sentence).
    """

    def __init__(self, provider: Provider):
        self.provider = provider
        self.calls = 0
        self.requests: list[str] = []
        self.max_concurrent = 0
        self._active = 0
        self._failures: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        opts = self.provider.options
        with self._lock:
            self.calls += 1
            self.requests.append(prompt)
            self._active += 1
            self.max_concurrent = max(self.max_concurrent, self._active)
            seen = self._failures.get(prompt, 0)
            self._failures[prompt] = seen + 1
        try:
            delay = float(opts.get("latency", 0.0))
            if delay:
                threading.Event().wait(delay)
            if opts.get("always_fail"):
                raise TransientError("mock provider configured to fail")
            if seen < int(opts.get("fail_times", 0)):
                raise TransientError(f"mock transient failure {seen + 1}")
            if opts.get("refuse"):
                return "I'm sorry, but I can't help with rewriting this."
            _, _, abstract = prompt.partition("The abstract is : ")
            return reverse_sentences(abstract)
        finally:
            with self._lock:
                self._active -= 1


class HTTPClient:
    """One request per ``complete`` call; retry policy lives in the caller."""

    def __init__(self, provider: Provider, api_key: str, transport: httpx.BaseTransport | None = None):
        self.provider = provider
        self.calls = 0
        self._key = api_key
        base = provider.base_url or DEFAULT_BASE_URLS.get(provider.kind)
        if base is None:
            raise ValueError(f"provider {provider.name!r}: unknown kind {provider.kind!r} and no base_url")
        self._http = httpx.Client(base_url=base, timeout=provider.timeout, transport=transport)

    def request_spec(self, prompt: str) -> tuple[str, dict[str, str], dict[str, Any]]:
        p = self.provider
        if p.kind == "anthropic":
            body = {"model": p.model_id, "max_tokens": 1024, **p.params,
                    "messages": [{"role": "user", "content": prompt}]}
            headers = {"x-api-key": self._key, "anthropic-version": "2023-06-01"}
            return "/v1/messages", headers, body
        if p.kind == "gemini":
            body = {"contents": [{"role": "user", "parts": [{"text": prompt}]}]}
            if p.params:
                body["generationConfig"] = dict(p.params)
            return f"/v1beta/models/{p.model_id}:generateContent", {"x-goog-api-key": self._key}, body
        # mistral and other OpenAI-compatible chat endpoints
        body = {"model": p.model_id, **p.params, "messages": [{"role": "user", "content": prompt}]}
        return "/v1/chat/completions", {"Authorization": f"Bearer {self._key}"}, body

    def complete(self, prompt: str) -> str:
        path, headers, body = self.request_spec(prompt)
        self.calls += 1
        try:
            resp = self._http.post(path, headers=headers, json=body)
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return _extract_text(self.provider.kind, resp.json())
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise PermanentError(f"unexpected response shape: {exc}") from exc

    def close(self) -> None:
        self._http.close()


def _extract_text(kind: str, payload: dict[str, Any]) -> str:
    if kind == "anthropic":
        return "".join(block.get("text", "") for block in payload["content"] if block.get("type") == "text")
    if kind == "gemini":
        cand = payload.get("candidates") or []
        if not cand:
            return ""
        return "".join(part.get("text", "") for part in cand[0]["content"]["parts"])
    return payload["choices"][0]["message"]["content"] or ""


def check_credentials(providers: list[Provider]) -> None:
    for p in providers:
        if p.is_live:
            env = p.credential_env or f"{p.kind.upper()}_API_KEY"
            if not os.environ.get(env):
                raise MissingCredential(p.name, env)


def build_client(provider: Provider, transport: httpx.BaseTransport | None = None) -> Client:
    if not provider.is_live:
        return MockClient(provider)
    env = provider.credential_env or f"{provider.kind.upper()}_API_KEY"
    key = os.environ.get(env)
    if not key:
        raise MissingCredential(provider.name, env)
    return HTTPClient(provider, key, transport=transport)
