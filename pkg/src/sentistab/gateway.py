"""Chat-completions client with a content-addressed on-disk response cache.

Requests are canonicalized to a compact JSON array::

    [endpoint, model, temperature, seed, [{"content": ..., "role": ...}, ...]]

serialized with ``separators=(",", ":")``, sorted keys inside each message,
``ensure_ascii=False`` and UTF-8 encoding. The cache key is the lowercase hex
SHA-256 of that string, and replies live at ``{cache_dir}/{key[:2]}/{key}.json``.

Modes:
    live    cache first, network on miss, persist to ``cache_dir`` if one is set
            (otherwise an in-memory cache is used)
    record  same as live, but ``cache_dir`` is mandatory
    replay  cache only; a miss raises :class:`MissingCacheEntry`
"""

from __future__ import annotations

import contextlib
import contextvars
import hashlib
import json
import logging
import os
import random
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import httpx

from .errors import (
    AuthError,
    ConfigError,
    GatewayError,
    MalformedResponse,
    MissingCacheEntry,
    RateLimited,
    Timeout,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "SENTI_API_KEY"
MODES = ("live", "record", "replay")

Message = Union[Tuple[str, str], Mapping[str, str]]


@dataclass(frozen=True)
class CompletionRequest:
    endpoint: str
    model: str
    messages: Tuple[Tuple[str, str], ...]
    temperature: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        msgs = []
        for m in self.messages:
            if isinstance(m, Mapping):
                msgs.append((str(m["role"]), str(m["content"])))
            else:
                role, content = m
                msgs.append((str(role), str(content)))
        if not msgs:
            raise ValueError("a completion request needs at least one message")
        if self.temperature != 0:
            raise ValueError("temperature must be 0")
        object.__setattr__(self, "messages", tuple(msgs))
        object.__setattr__(self, "temperature", 0.0)
        object.__setattr__(self, "endpoint", self.endpoint.rstrip("/"))

    def payload(self) -> dict:
        body: dict = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }
        if self.seed is not None:
            body["seed"] = self.seed
        return body


def canonicalize(req: CompletionRequest) -> str:
    msgs = [{"role": r, "content": c} for r, c in req.messages]
    return json.dumps(
        [req.endpoint, req.model, req.temperature, req.seed, msgs],
        separators=(",", ":"),
        sort_keys=True,
        ensure_ascii=False,
    )


def cache_key(req: CompletionRequest) -> str:
    return hashlib.sha256(canonicalize(req).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: Optional[str] = None
    model: Optional[str] = None
    mode: str = "live"
    cache_dir: Optional[Path] = None
    max_in_flight: int = 4
    max_retries: int = 3
    timeout: float = 60.0
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    jitter: float = 0.2
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"gateway.mode: expected one of {MODES}, got {self.mode!r}")
        if self.max_in_flight < 1:
            raise ConfigError("gateway.max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("gateway.max_retries must be >= 0")
        if self.mode in ("record", "replay") and self.cache_dir is None:
            raise ConfigError(f"gateway.cache_dir is required in {self.mode} mode")
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))


# Per-context log of cache keys, used to attribute LLM calls to one sample.
_call_log: contextvars.ContextVar[Optional[List[str]]] = contextvars.ContextVar("call_log", default=None)


@contextlib.contextmanager
def track_calls() -> Iterator[List[str]]:
    """Collect the cache key of every completion issued inside the block."""
    calls: List[str] = []
    token = _call_log.set(calls)
    try:
        yield calls
    finally:
        _call_log.reset(token)


def cache_path(cache_dir: Path, key: str) -> Path:
    return Path(cache_dir) / key[:2] / f"{key}.json"


class Gateway:
    """Thread-safe completion service. Share one instance across workers."""

    def __init__(self, cfg: GatewayConfig, client: Optional[httpx.Client] = None):
        self.cfg = cfg
        self._client = client
        self._client_lock = threading.Lock()
        self._sem = threading.BoundedSemaphore(cfg.max_in_flight)
        self._mem: dict = {}
        self._key_locks: dict = {}
        self._locks_lock = threading.Lock()
        self._stats_lock = threading.Lock()
        self.network_calls = 0
        self.completions = 0

    # -- public -------------------------------------------------------------

    def request(self, messages: Sequence[Message]) -> CompletionRequest:
        if not self.cfg.endpoint or not self.cfg.model:
            raise ConfigError("gateway.endpoint and gateway.model must be set for LLM backends")
        return CompletionRequest(self.cfg.endpoint, self.cfg.model, tuple(messages), 0.0, self.cfg.seed)

    def chat(self, messages: Sequence[Message]) -> str:
        return self.complete(self.request(messages))

    def complete(self, req: CompletionRequest) -> str:
        key = cache_key(req)
        with self._stats_lock:
            self.completions += 1
        calls = _call_log.get()
        if calls is not None:
            calls.append(key)

        hit = self._lookup(key)
        if hit is not None:
            return hit
        if self.cfg.mode == "replay":
            raise MissingCacheEntry(key)
        with self._lock_for(key):
            hit = self._lookup(key)
            if hit is not None:
                return hit
            reply = self._fetch(req)
            self._store(key, canonicalize(req), reply)
        return reply

    def close(self):
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- cache --------------------------------------------------------------

    def _lookup(self, key: str) -> Optional[str]:
        if key in self._mem:
            return self._mem[key]
        if self.cfg.cache_dir is None:
            return None
        path = cache_path(self.cfg.cache_dir, key)
        try:
            with open(path, encoding="utf-8") as f:
                reply = json.load(f)["reply"]
        except FileNotFoundError:
            return None
        self._mem[key] = reply
        return reply

    def _store(self, key: str, canonical: str, reply: str):
        self._mem[key] = reply
        if self.cfg.cache_dir is None:
            return
        path = cache_path(self.cfg.cache_dir, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "request": canonical,
            "reply": reply,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, ensure_ascii=False)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_lock:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    # -- network ------------------------------------------------------------

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                self._client = httpx.Client(timeout=self.cfg.timeout)
            return self._client

    def _backoff(self, attempt: int) -> float:
        base = self.cfg.backoff_base * self.cfg.backoff_factor ** attempt
        return base * random.uniform(1 - self.cfg.jitter, 1 + self.cfg.jitter)

    def _fetch(self, req: CompletionRequest) -> str:
        api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise AuthError(f"{API_KEY_ENV} is not set")
        url = f"{req.endpoint}/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}"}
        last: Exception = GatewayError("no attempt made")
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self._backoff(attempt - 1))
            with self._sem:
                with self._stats_lock:
                    self.network_calls += 1
                try:
                    resp = self._http().post(url, json=req.payload(), headers=headers)
                except httpx.TimeoutException as exc:
                    last = Timeout(f"{url}: {exc}")
                    continue
                except httpx.TransportError as exc:
                    last = GatewayError(f"{url}: {exc}")
                    continue
            if resp.status_code in (401, 403):
                raise AuthError(f"{url}: HTTP {resp.status_code}")
            if resp.status_code == 429:
                last = RateLimited(f"{url}: HTTP 429 after {attempt + 1} attempts")
                continue
            if resp.status_code >= 500:
                last = GatewayError(f"{url}: HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise GatewayError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
            return _extract_content(resp)
        raise last


def _extract_content(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"no choices[0].message.content in response: {exc!r}") from None
    if not isinstance(content, str):
        raise MalformedResponse("choices[0].message.content is not a string")
    return content


def iter_cache(cache_dir: Path) -> Iterator[Tuple[str, dict]]:
    for path in sorted(Path(cache_dir).glob("??/*.json")):
        with open(path, encoding="utf-8") as f:
            yield path.stem, json.load(f)


def clear_cache(cache_dir: Path) -> int:
    n = 0
    for path in Path(cache_dir).glob("??/*.json"):
        path.unlink()
        n += 1
    return n
