"""Chat-completion backends: OpenAI-compatible HTTP, replay cassettes, scripted.

``complete`` and ``complete_batch`` accept either a BackendConfig or a
backend object. The HTTP backend retries transport errors, 5xx and 429
with exponential backoff; the replay backend answers from a recorded
cassette keyed by a stable hash of (system, user); the scripted backend
answers from an in-process responder and exists for oracle runs and tests.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import BackendUnavailableError, DomainError, ReplayMissError

ENDPOINT_ENV_VAR = "PHENOKG_ENDPOINT_URL"
API_KEY_ENV_VAR = "PHENOKG_API_KEY"

_RETRYABLE_STATUSES = frozenset({429}) | frozenset(range(500, 600))


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 2048
    request_tag: str = ""

    def __post_init__(self):
        if not self.user:
            raise DomainError("ChatRequest.user must be nonempty")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise DomainError(f"temperature must be finite and >= 0, got {self.temperature}")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise DomainError("max_attempts must be >= 1")
        if self.base_backoff < 0:
            raise DomainError("base_backoff must be >= 0")


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "http" or "replay"
    model_name: str = ""
    endpoint_url: str = ""
    cassette_path: str = ""
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    timeout: float = 30.0
    max_in_flight: int = 4


def validate_config(config: BackendConfig) -> list[str]:
    """Return every problem with the config (empty list means valid)."""
    problems = []
    if config.kind not in ("http", "replay"):
        problems.append(f"backend kind must be 'http' or 'replay', got {config.kind!r}")
    if config.kind == "http" and not (config.endpoint_url or os.environ.get(ENDPOINT_ENV_VAR)):
        problems.append(f"http backend requires endpoint_url (or ${ENDPOINT_ENV_VAR})")
    if config.kind == "replay" and not config.cassette_path:
        problems.append("replay backend requires cassette_path")
    if config.max_in_flight < 1:
        problems.append(f"max_in_flight must be >= 1, got {config.max_in_flight}")
    if config.timeout <= 0:
        problems.append(f"timeout must be positive, got {config.timeout}")
    return problems


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Usage
    attempts: int


def request_hash(system: str, user: str) -> str:
    """Stable content hash keying cassette entries; length-prefixed to avoid collisions."""
    sys_b = system.encode("utf-8")
    usr_b = user.encode("utf-8")
    h = hashlib.sha256()
    h.update(str(len(sys_b)).encode("ascii"))
    h.update(b":")
    h.update(sys_b)
    h.update(b"|")
    h.update(str(len(usr_b)).encode("ascii"))
    h.update(b":")
    h.update(usr_b)
    return h.hexdigest()


def _approx_usage(request: ChatRequest, text: str) -> Usage:
    # deterministic whitespace-token counts for offline backends
    return Usage(
        prompt_tokens=len(request.system.split()) + len(request.user.split()),
        completion_tokens=len(text.split()),
    )


def backoff_schedule(retry: RetryPolicy) -> list[float]:
    """Delays slept between attempts; non-decreasing by construction."""
    return [retry.base_backoff * (2**i) for i in range(retry.max_attempts - 1)]


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff.

    Endpoint URL and bearer token can be overridden/supplied via the
    PHENOKG_ENDPOINT_URL and PHENOKG_API_KEY environment variables.
    """

    def __init__(self, config: BackendConfig, sleep: Callable[[float], None] = time.sleep):
        problems = validate_config(config)
        if problems:
            raise DomainError("; ".join(problems))
        self.config = config
        self.endpoint_url = os.environ.get(ENDPOINT_ENV_VAR) or config.endpoint_url
        self.api_key = os.environ.get(API_KEY_ENV_VAR, "")
        self.max_in_flight = config.max_in_flight
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> ChatResponse:
        retry = self.config.retry
        delays = backoff_schedule(retry)
        last_status: int | None = None
        last_error = ""
        for attempt in range(1, retry.max_attempts + 1):
            try:
                status, payload = self._post_once(request)
            except requests.RequestException as exc:
                last_status, last_error = None, str(exc)
            else:
                if status == 200:
                    return self._parse_payload(payload, request, attempt)
                last_status, last_error = status, _error_snippet(payload)
                if status not in _RETRYABLE_STATUSES:
                    raise BackendUnavailableError(
                        f"backend returned non-retryable status {status}: {last_error}",
                        last_status=status,
                        attempts=attempt,
                    )
            if attempt < retry.max_attempts:
                self._sleep(delays[attempt - 1])
        raise BackendUnavailableError(
            f"backend unavailable after {retry.max_attempts} attempts "
            f"(last status: {last_status}, last error: {last_error})",
            last_status=last_status,
            attempts=retry.max_attempts,
        )

    def _post_once(self, request: ChatRequest) -> tuple[int, dict]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        resp = requests.post(self.endpoint_url, json=body, headers=headers, timeout=self.config.timeout)
        try:
            payload = resp.json()
        except ValueError:
            payload = {"error": resp.text[:500]}
        return resp.status_code, payload

    @staticmethod
    def _parse_payload(payload: dict, request: ChatRequest, attempts: int) -> ChatResponse:
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendUnavailableError(
                f"malformed completion payload: {_error_snippet(payload)}", attempts=attempts
            ) from None
        usage = payload.get("usage") or {}
        return ChatResponse(
            text=text,
            usage=Usage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
            attempts=attempts,
        )


def _error_snippet(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True)[:200]


class ReplayBackend:
    """Bit-deterministic backend answering from a recorded cassette."""

    def __init__(self, cassette_path: str | Path, max_in_flight: int = 4):
        self.cassette_path = str(cassette_path)
        self.max_in_flight = max_in_flight
        self._responses = load_cassette(cassette_path)

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request_hash(request.system, request.user)
        try:
            text = self._responses[key]
        except KeyError:
            raise ReplayMissError(key) from None
        return ChatResponse(text=text, usage=_approx_usage(request, text), attempts=1)


class ScriptedBackend:
    """In-process deterministic backend for oracle runs and tests.

    Answers either from a responder callable (request -> text) or from a
    queue of texts consumed in call order. Thread-safe.
    """

    def __init__(
        self,
        responder: Callable[[ChatRequest], str] | None = None,
        queue: Sequence[str] | None = None,
        max_in_flight: int = 4,
    ):
        if (responder is None) == (queue is None):
            raise DomainError("provide exactly one of responder or queue")
        self._responder = responder
        self._queue = list(queue) if queue is not None else None
        self._lock = threading.Lock()
        self.max_in_flight = max_in_flight
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls.append(request)
            if self._queue is not None:
                if not self._queue:
                    raise BackendUnavailableError("scripted queue exhausted", attempts=1)
                text = self._queue.pop(0)
            else:
                text = None
        if text is None:
            text = self._responder(request)
        return ChatResponse(text=text, usage=_approx_usage(request, text), attempts=1)


def make_backend(config: BackendConfig):
    problems = validate_config(config)
    if problems:
        raise DomainError("; ".join(problems))
    if config.kind == "http":
        return HttpBackend(config)
    return ReplayBackend(config.cassette_path, max_in_flight=config.max_in_flight)


def _as_backend(backend_or_config):
    if isinstance(backend_or_config, BackendConfig):
        return make_backend(backend_or_config)
    return backend_or_config


def complete(backend_or_config, request: ChatRequest) -> ChatResponse:
    """Single chat completion; see the backend classes for error semantics."""
    return _as_backend(backend_or_config).complete(request)


def complete_batch(
    backend_or_config,
    requests_: Sequence[ChatRequest],
    max_in_flight: int | None = None,
) -> list[ChatResponse | Exception]:
    """Complete many requests with bounded concurrency.

    Results come back in input order regardless of completion order; a
    failed entry is returned positionally as its exception instead of
    aborting the rest (the asyncio.gather(return_exceptions=True) idiom).
    """
    if not requests_:
        raise DomainError("complete_batch requires a nonempty request list")
    backend = _as_backend(backend_or_config)
    bound = max_in_flight or getattr(backend, "max_in_flight", 4)
    if bound < 1:
        raise DomainError(f"max_in_flight must be >= 1, got {bound}")
    results: list[ChatResponse | Exception] = [None] * len(requests_)  # type: ignore[list-item]
    with ThreadPoolExecutor(max_workers=min(bound, len(requests_))) as pool:
        futures = [pool.submit(backend.complete, req) for req in requests_]
        for i, future in enumerate(futures):
            try:
                results[i] = future.result()
            except Exception as exc:  # noqa: BLE001 - failures are positional entries
                results[i] = exc
    return results


def cassette_entry(request: ChatRequest, response_text: str) -> dict:
    return {"hash": request_hash(request.system, request.user), "response": response_text}


def write_cassette(path: str | Path, entries: Sequence[dict]) -> None:
    """Write cassette entries ({hash, response} dicts) as JSON Lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps({"hash": entry["hash"], "response": entry["response"]}) + "\n")


def load_cassette(path: str | Path) -> dict[str, str]:
    responses: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        if "hash" not in record or "response" not in record:
            raise DomainError(f"cassette line {line_no}: expected keys 'hash' and 'response'")
        responses[record["hash"]] = record["response"]
    return responses


def record_cassette(backend_or_config, requests_: Sequence[ChatRequest], output_path: str | Path) -> int:
    """Run requests against a live backend and persist (hash, response) pairs.

    An empty request list writes an empty, valid cassette. Returns the
    number of recorded entries.
    """
    backend = _as_backend(backend_or_config)
    entries = []
    for request in requests_:
        response = backend.complete(request)
        entries.append(cassette_entry(request, response.text))
    write_cassette(output_path, entries)
    return len(entries)
