"""Judge backends: OpenAI-compatible chat completions with a replayable cache.

Three modes share one content-addressed cache
(``{cache_dir}/{digest[:2]}/{digest}.response``):

* ``live``   - consult the cache, otherwise call the provider; cache writes are best effort.
* ``record`` - like live, but a cache directory is required and every write is fsynced.
* ``replay`` - cache only. A miss raises :class:`ReplayMissError`; no transport is ever built.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from collections.abc import Callable
from concurrent.futures import Future
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import httpx

from .errors import BackendError, ConfigurationError, InvalidArgumentError, ReplayMissError
from .prompts import ChatRequest

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


class BackendMode(enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


@dataclass(frozen=True)
class BackendConfig:
    model_name: str
    base_url: str = DEFAULT_BASE_URL
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 4
    max_concurrency: int = 4
    cache_dir: Path | None = None
    mode: BackendMode = BackendMode.LIVE
    backoff_base: float = 1.0
    backoff_max: float = 30.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", BackendMode(self.mode))
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        if not self.model_name or not self.model_name.strip():
            raise ConfigurationError("model_name must be set")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigurationError("max_concurrency must be >= 1")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")
        if self.mode is BackendMode.REPLAY and (self.cache_dir is None or not self.cache_dir.is_dir()):
            raise ConfigurationError(f"replay mode needs an existing cache_dir, got {self.cache_dir}")
        if self.mode is BackendMode.RECORD and self.cache_dir is None:
            raise ConfigurationError("record mode needs a cache_dir")


def cache_key(request: ChatRequest, model_name: str) -> str:
    """SHA-256 over a canonical JSON serialisation of everything that shapes the answer."""
    payload = {
        "model": model_name,
        "system": request.system_message,
        "user": request.user_message,
        "decoding": request.decoding.to_dict(),
        "salt": request.cache_salt,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Append-only store, one UTF-8 file per digest.

    Writers go through a temp file and ``os.link`` so an existing entry is
    never overwritten, even by another process.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def path_for(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.response"

    def get(self, digest: str) -> str | None:
        path = self.path_for(digest)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None

    def __contains__(self, digest: str) -> bool:
        return self.path_for(digest).is_file()

    def _lock(self, digest: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(digest, threading.Lock())

    def put(self, digest: str, text: str, *, durable: bool = False) -> bool:
        """Store ``text``; returns False if an entry already existed."""
        path = self.path_for(digest)
        with self._lock(digest):
            if path.exists():
                return False
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".part")
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
                    fh.flush()
                    if durable:
                        os.fsync(fh.fileno())
                try:
                    os.link(tmp, path)
                except FileExistsError:
                    return False
            finally:
                os.unlink(tmp)
            if durable:
                dir_fd = os.open(path.parent, os.O_RDONLY)
                try:
                    os.fsync(dir_fd)
                finally:
                    os.close(dir_fd)
            return True

    def digests(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name[: -len(".response")] for p in self.root.glob("*/*.response"))


@dataclass
class TransportResponse:
    status: int
    payload: dict | None = None
    text: str = ""
    headers: dict[str, str] = field(default_factory=dict)


class Transport(Protocol):
    def post_chat(self, body: dict) -> TransportResponse: ...


class HttpTransport:
    """POST {base_url}/chat/completions over a shared httpx client."""

    def __init__(self, base_url: str, api_key: str, timeout: float):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self._client = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"},
        )

    def post_chat(self, body: dict) -> TransportResponse:
        resp = self._client.post(self.url, json=body)
        try:
            payload = resp.json()
        except ValueError:
            payload = None
        return TransportResponse(resp.status_code, payload, resp.text, dict(resp.headers))

    def close(self) -> None:
        self._client.close()


class FunctionTransport:
    """In-process transport answering with ``fn(body) -> content``.

    Used for scripted judges and for recording deterministic fixture caches.
    """

    def __init__(self, fn: Callable[[dict], str]):
        self.fn = fn

    def post_chat(self, body: dict) -> TransportResponse:
        content = self.fn(body)
        payload = {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
        return TransportResponse(200, payload, json.dumps(payload))


@dataclass(frozen=True)
class Completion:
    text: str
    digest: str
    cache_hit: bool
    shared: bool = False


@dataclass
class BackendStats:
    requests: int = 0
    cache_hits: int = 0
    network_calls: int = 0
    retries: int = 0
    deduplicated: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def to_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


def _retryable(status: int | None) -> bool:
    return status is None or status == 429 or status >= 500


class Backend:
    """Thread-safe judge backend.

    At most ``config.max_concurrency`` provider calls are in flight at once.
    Concurrent callers asking for the same digest share one provider call.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Transport | None = None,
        *,
        rng: random.Random | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir is not None else None
        self.stats = BackendStats()
        self._sleep = sleep
        self._rng = rng or random.Random(0)
        self._slots = threading.BoundedSemaphore(config.max_concurrency)
        self._lock = threading.Lock()
        self._inflight: dict[str, Future] = {}
        self._transport: Transport | None = None
        if config.mode is not BackendMode.REPLAY:
            self._transport = transport or self._default_transport()

    def _default_transport(self) -> HttpTransport:
        key = os.environ.get(self.config.api_key_env, "").strip()
        if not key:
            raise ConfigurationError(
                f"environment variable {self.config.api_key_env} is not set "
                f"(required for {self.config.mode.value} mode)"
            )
        return HttpTransport(self.config.base_url, key, self.config.timeout)

    def complete(self, request: ChatRequest) -> str:
        return self.complete_ex(request).text

    def complete_ex(self, request: ChatRequest) -> Completion:
        digest = cache_key(request, self.config.model_name)
        with self._lock:
            self.stats.requests += 1
            pending = self._inflight.get(digest)
            owner = pending is None
            if owner:
                pending = Future()
                self._inflight[digest] = pending
            else:
                self.stats.deduplicated += 1
        if not owner:
            done: Completion = pending.result()
            return Completion(done.text, digest, done.cache_hit, shared=True)
        try:
            result = self._resolve(request, digest)
        except BaseException as exc:
            pending.set_exception(exc)
            raise
        else:
            pending.set_result(result)
            return result
        finally:
            with self._lock:
                del self._inflight[digest]

    def _resolve(self, request: ChatRequest, digest: str) -> Completion:
        if self.cache is not None:
            cached = self.cache.get(digest)
            if cached is not None:
                with self._lock:
                    self.stats.cache_hits += 1
                return Completion(cached, digest, cache_hit=True)
        if self.config.mode is BackendMode.REPLAY:
            raise ReplayMissError(digest)
        text = self._call_provider(request)
        if self.cache is not None:
            durable = self.config.mode is BackendMode.RECORD
            try:
                self.cache.put(digest, text, durable=durable)
            except OSError:
                if durable:
                    raise
                log.warning("could not write cache entry %s", digest, exc_info=True)
        return Completion(text, digest, cache_hit=False)

    def _body(self, request: ChatRequest) -> dict[str, Any]:
        return {
            "model": self.config.model_name,
            "messages": request.messages(),
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_output_tokens,
        }

    def _backoff(self, attempt: int, retry_after: str | None) -> float:
        delay = min(self.config.backoff_max, self.config.backoff_base * (2 ** attempt))
        with self._lock:
            delay *= 0.5 + 0.5 * self._rng.random()
        if retry_after:
            try:
                delay = max(delay, min(float(retry_after), self.config.backoff_max))
            except ValueError:
                pass
        return delay

    def _call_provider(self, request: ChatRequest) -> str:
        assert self._transport is not None
        body = self._body(request)
        last_status: int | None = None
        last_detail = ""
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                with self._lock:
                    self.stats.retries += 1
            retry_after = None
            with self._slots:
                with self._lock:
                    self.stats.network_calls += 1
                try:
                    resp = self._transport.post_chat(body)
                except httpx.TransportError as exc:
                    resp = None
                    last_status, last_detail = None, f"{type(exc).__name__}: {exc}"
            if resp is not None:
                if resp.status == 200:
                    return self._extract(resp)
                last_status, last_detail = resp.status, resp.text[:500]
                retry_after = resp.headers.get("retry-after") or resp.headers.get("Retry-After")
                if not _retryable(resp.status):
                    raise BackendError(f"provider rejected request: {last_detail}", status=resp.status)
            if attempt < self.config.max_retries:
                delay = self._backoff(attempt, retry_after)
                log.info("retrying after status %s in %.2fs", last_status, delay)
                self._sleep(delay)
        raise BackendError(
            f"request failed after {self.config.max_retries} retries: {last_detail}", status=last_status
        )

    def _extract(self, resp: TransportResponse) -> str:
        payload = resp.payload
        try:
            content = payload["choices"][0]["message"]["content"]  # type: ignore[index]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed provider response: {resp.text[:200]}", status=resp.status) from None
        if not isinstance(content, str):
            raise BackendError("provider returned non-text content", status=resp.status)
        usage = payload.get("usage") or {}
        with self._lock:
            self.stats.prompt_tokens += int(usage.get("prompt_tokens") or 0)
            self.stats.completion_tokens += int(usage.get("completion_tokens") or 0)
        return content

    def close(self) -> None:
        close = getattr(self._transport, "close", None)
        if close is not None:
            close()


def complete(request: ChatRequest, config: BackendConfig, transport: Transport | None = None) -> str:
    """One-shot convenience wrapper; build a :class:`Backend` to reuse connections."""
    backend = Backend(config, transport)
    try:
        return backend.complete(request)
    finally:
        backend.close()


def parse_mode(value: str | BackendMode) -> BackendMode:
    try:
        return BackendMode(value.lower() if isinstance(value, str) else value)
    except ValueError:
        raise InvalidArgumentError(
            f"unknown backend mode {value!r}; expected one of {[m.value for m in BackendMode]}"
        ) from None
