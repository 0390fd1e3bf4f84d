"""Chat-completion transports shared by the title generator and the judge.

The wire contract is a chat-completion-style POST of
``{"model": ..., "messages": [...], "temperature": ...}``; the assistant
text comes back in ``choices[0].message.content``. A file-backed stub
replays canned responses keyed by the SHA-256 of the canonical request
body, so tests and offline runs never touch the network.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Protocol

import httpx

API_KEY_ENV = "SUBJECTFORGE_LLM_API_KEY"

MessageList = list[dict[str, str]]


class ChatTransportError(RuntimeError):
    """Transport failure or non-2xx response; retryable."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ChatClient(Protocol):
    def complete(self, messages: MessageList) -> str:
        """Return the assistant text for one request; may raise ChatTransportError."""
        ...


class TokenBucket:
    """Thread-safe requests/second limiter; acquire() blocks until a token frees up."""

    def __init__(self, rate_per_sec: float, burst: int = 1):
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self._rate = rate_per_sec
        self._capacity = float(max(1, burst))
        self._tokens = self._capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._updated) * self._rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


def request_fingerprint(model: str, messages: MessageList, temperature: float) -> str:
    body = {"model": model, "messages": messages, "temperature": temperature}
    canonical = json.dumps(body, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class HttpChatClient:
    """POSTs to a chat-completions endpoint with bearer auth from the environment.

    The API key is read from SUBJECTFORGE_LLM_API_KEY and never logged or
    echoed in errors.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.7,
        max_tokens: int = 128,
        timeout: float = 30.0,
        rate_limit_rps: float | None = None,
        api_key: str | None = None,
    ):
        self.base_url = base_url
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self._bucket = TokenBucket(rate_limit_rps) if rate_limit_rps else None
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self._http = httpx.Client(timeout=timeout)

    def complete(self, messages: MessageList) -> str:
        if self._bucket:
            self._bucket.acquire()
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            resp = self._http.post(self.base_url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ChatTransportError(f"transport error: {type(exc).__name__}") from exc
        if resp.status_code < 200 or resp.status_code >= 300:
            raise ChatTransportError(f"HTTP {resp.status_code}", status=resp.status_code)
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ChatTransportError(f"unexpected response shape: {type(exc).__name__}") from exc


class FileStubClient:
    """Replays canned assistant texts from a JSON fixture keyed by request hash.

    Fixture values may be a string (always returned) or a list consumed per
    call (last element repeats). A ``__default__`` key answers unknown
    requests; without one, an unknown request is a transport error.
    """

    def __init__(
        self,
        fixture_path: str | Path,
        model: str = "stub-model",
        temperature: float = 0.7,
        rate_limit_rps: float | None = None,
    ):
        self.model = model
        self.temperature = temperature
        self._bucket = TokenBucket(rate_limit_rps) if rate_limit_rps else None
        with open(fixture_path, encoding="utf-8") as fh:
            self._fixtures: dict = json.load(fh)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, messages: MessageList) -> str:
        if self._bucket:
            self._bucket.acquire()
        key = request_fingerprint(self.model, messages, self.temperature)
        with self._lock:
            value = self._fixtures.get(key, self._fixtures.get("__default__"))
            if value is None:
                raise ChatTransportError(f"no canned response for request {key[:12]}")
            if isinstance(value, list):
                idx = min(self._cursor.get(key, 0), len(value) - 1)
                self._cursor[key] = idx + 1
                value = value[idx]
        if isinstance(value, dict) and value.get("error"):
            raise ChatTransportError(str(value.get("error")), status=value.get("status"))
        return str(value)
