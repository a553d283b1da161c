"""Polite, cached downloading of subtitle files.

All workers share one rate limiter and one cache directory. Cache entries
never expire; ``refetch`` bypasses them.

Cache layout::

    {cache_dir}/{key}.vtt        subtitle bytes
    {cache_dir}/{key}.meta.json  url, fetched_at, http_status, content_length
                                 (plus error/attempts when the last fetch failed)
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence
from urllib.parse import urlsplit, urlunsplit

import requests

from subtext.subtitle_index import SubtitleDescriptor

log = logging.getLogger(__name__)

CACHE_ENV = "SUBTEXT_CACHE_DIR"
DEFAULT_CACHE_DIR = ".subtext-cache"

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504}) | frozenset(range(505, 600))
EXPIRED_STATUS = frozenset({403, 404})


class FailureKind(str, enum.Enum):
    OfflineMiss = "offline_miss"
    Expired = "expired"
    NetworkExhausted = "network_exhausted"
    EmptyBody = "empty_body"
    HttpError = "http_error"


class FetchError(Exception):
    kind: FailureKind

    def __init__(self, message: str = "", attempts: int = 0, http_status: int | None = None):
        super().__init__(message or self.kind.value)
        self.attempts = attempts
        self.http_status = http_status


class OfflineMiss(FetchError):
    kind = FailureKind.OfflineMiss


class Expired(FetchError):
    kind = FailureKind.Expired


class NetworkExhausted(FetchError):
    kind = FailureKind.NetworkExhausted


class EmptyBody(FetchError):
    kind = FailureKind.EmptyBody


class HttpError(FetchError):
    """Non-retryable HTTP status other than 403/404."""

    kind = FailureKind.HttpError


ERROR_CLASSES = {cls.kind: cls for cls in (OfflineMiss, Expired, NetworkExhausted, EmptyBody, HttpError)}


@dataclass
class FetchConfig:
    max_concurrent: int = 4
    requests_per_second: float = 2.0
    max_retries: int = 3
    backoff_base_ms: int = 500
    timeout_ms: int = 10000
    cache_dir: Path | None = None
    offline: bool = False
    refetch: bool = False

    def __post_init__(self):
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if not self.requests_per_second > 0:
            raise ValueError("requests_per_second must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base_ms < 1:
            raise ValueError("backoff_base_ms must be >= 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")

    @property
    def resolved_cache_dir(self) -> Path:
        if self.cache_dir is not None:
            return Path(self.cache_dir)
        return Path(os.environ.get(CACHE_ENV) or DEFAULT_CACHE_DIR)

    def backoff_seconds(self, attempt: int) -> float:
        """Delay after the given failed attempt (1-based)."""
        return self.backoff_base_ms * 2 ** (attempt - 1) / 1000


@dataclass(frozen=True)
class SubtitlePayload:
    descriptor: SubtitleDescriptor
    data: bytes
    fetched_at: int
    cache_hit: bool
    attempts: int = 1


_UNSAFE = re.compile(r"[^a-z0-9-]")


def strip_query(url: str) -> str:
    parts = urlsplit(url)
    return urlunsplit((parts.scheme, parts.netloc, parts.path, "", ""))


def cache_key(descriptor: SubtitleDescriptor, post_id: str) -> str:
    """``{post_id}_{language}_{hash}``; signed query strings do not affect the key."""
    basis = descriptor.url_key or strip_query(descriptor.url)
    digest = hashlib.sha256(basis.encode("utf-8")).hexdigest()[:16]
    post = _UNSAFE.sub("-", post_id.lower())
    language = _UNSAFE.sub("-", descriptor.language.lower())
    return f"{post}_{language}_{digest}"


class RateLimiter:
    """Thread-safe limiter spacing request starts at least ``1/rate`` seconds apart."""

    def __init__(self, rate: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = None

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            start = now if self._next is None else max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _dump_meta(meta: dict) -> bytes:
    return (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode("utf-8")


class Cache:
    def __init__(self, root: Path):
        self.root = Path(root)

    def vtt_path(self, key: str) -> Path:
        return self.root / f"{key}.vtt"

    def meta_path(self, key: str) -> Path:
        return self.root / f"{key}.meta.json"

    def read(self, key: str) -> bytes | None:
        try:
            data = self.vtt_path(key).read_bytes()
        except OSError:
            return None
        return data or None

    def read_meta(self, key: str) -> dict:
        try:
            meta = json.loads(self.meta_path(key).read_text(encoding="utf-8"))
        except (OSError, ValueError):
            return {}
        return meta if isinstance(meta, dict) else {}

    def write(self, key: str, data: bytes, meta: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.vtt_path(key), data)
        _atomic_write(self.meta_path(key), _dump_meta(meta))

    def write_failure(self, key: str, meta: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        _atomic_write(self.meta_path(key), _dump_meta(meta))


class Fetcher:
    """Downloads subtitle files under one shared rate limit and cache."""

    def __init__(self, config: FetchConfig, clock: Callable[[], float] = time.time,
                 sleep: Callable[[float], None] = time.sleep,
                 session_factory: Callable[[], requests.Session] = requests.Session):
        self.config = config
        self.cache = Cache(config.resolved_cache_dir)
        self.limiter = RateLimiter(config.requests_per_second, sleep=sleep)
        self._clock = clock
        self._sleep = sleep
        self._session_factory = session_factory
        self._local = threading.local()

    def _session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = self._session_factory()
        return session

    def _now(self) -> int:
        return int(self._clock())

    def cached(self, descriptor: SubtitleDescriptor, post_id: str) -> SubtitlePayload | None:
        key = cache_key(descriptor, post_id)
        data = self.cache.read(key)
        if data is None:
            return None
        fetched_at = self.cache.read_meta(key).get("fetched_at", 0)
        return SubtitlePayload(descriptor, data, int(fetched_at or 0), cache_hit=True, attempts=1)

    def fetch(self, descriptor: SubtitleDescriptor, post_id: str) -> SubtitlePayload:
        if not self.config.refetch:
            hit = self.cached(descriptor, post_id)
            if hit is not None:
                return hit
        if self.config.offline:
            raise OfflineMiss(f"{post_id}: not cached")
        return self._download(descriptor, post_id)

    def _fail(self, key: str, descriptor: SubtitleDescriptor, error: FetchError) -> FetchError:
        self.cache.write_failure(key, {
            "url": descriptor.url,
            "fetched_at": self._now(),
            "http_status": error.http_status,
            "content_length": 0,
            "error": error.kind.value,
            "attempts": error.attempts,
        })
        return error

    def _download(self, descriptor: SubtitleDescriptor, post_id: str) -> SubtitlePayload:
        key = cache_key(descriptor, post_id)
        cfg = self.config
        last = "no attempt made"
        status = None
        for attempt in range(1, cfg.max_retries + 2):
            if attempt > 1:
                self._sleep(cfg.backoff_seconds(attempt - 1))
            self.limiter.acquire()
            try:
                resp = self._session().get(descriptor.url, timeout=cfg.timeout_ms / 1000)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.debug("%s attempt %d failed: %s", post_id, attempt, last)
                continue
            status = resp.status_code
            if status in EXPIRED_STATUS:
                raise self._fail(key, descriptor, Expired(f"{post_id}: HTTP {status}", attempt, status))
            if status in RETRYABLE_STATUS:
                last = f"HTTP {status}"
                log.debug("%s attempt %d got HTTP %d", post_id, attempt, status)
                continue
            if not 200 <= status < 300:
                raise self._fail(key, descriptor, HttpError(f"{post_id}: HTTP {status}", attempt, status))
            data = resp.content
            if not data:
                raise self._fail(key, descriptor, EmptyBody(f"{post_id}: empty body", attempt, status))
            fetched_at = self._now()
            self.cache.write(key, data, {
                "url": descriptor.url,
                "fetched_at": fetched_at,
                "http_status": status,
                "content_length": len(data),
            })
            return SubtitlePayload(descriptor, data, fetched_at, cache_hit=False, attempts=attempt)
        raise self._fail(
            key, descriptor,
            NetworkExhausted(f"{post_id}: {last} after {cfg.max_retries + 1} attempts",
                             cfg.max_retries + 1, status),
        )

    def fetch_many(
        self, jobs: Sequence[tuple[SubtitleDescriptor, str]]
    ) -> list[SubtitlePayload | FetchError]:
        """Fetch every (descriptor, post_id) job; results come back in job order."""

        def one(job):
            try:
                return self.fetch(*job)
            except FetchError as exc:
                return exc

        if self.config.offline or len(jobs) <= 1:
            return [one(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.config.max_concurrent) as pool:
            return list(pool.map(one, jobs))


def fetch(descriptor: SubtitleDescriptor, post_id: str, config: FetchConfig) -> SubtitlePayload:
    """Fetch a single track with a throwaway Fetcher."""
    return Fetcher(config).fetch(descriptor, post_id)


def load_cached(
    descriptor: SubtitleDescriptor, post_id: str, cache_dir: Path
) -> SubtitlePayload | FetchError:
    """Cache-only lookup used by export.

    A recorded failure (e.g. an expired URL seen during pull) is returned as
    the matching error; an unknown entry is an ``OfflineMiss``.
    """
    cache = Cache(cache_dir)
    key = cache_key(descriptor, post_id)
    data = cache.read(key)
    meta = cache.read_meta(key)
    if data is not None:
        return SubtitlePayload(descriptor, data, int(meta.get("fetched_at", 0) or 0), True, 1)
    kind = meta.get("error")
    try:
        cls = ERROR_CLASSES[FailureKind(kind)]
    except ValueError:
        return OfflineMiss(f"{post_id}: not cached")
    return cls(f"{post_id}: recorded {kind}", int(meta.get("attempts", 0) or 0), meta.get("http_status"))

