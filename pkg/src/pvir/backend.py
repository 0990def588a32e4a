"""Model-inference contract, an HTTP client for it, and a fixture-driven mock.

Wire protocol: ``POST {base_url}/v1/generate`` with a JSON body

    {"model_id": ..., "prompt_text": ..., "media": [{"uri", "start_s", "end_s",
     "fps", "max_pixels"}, ...], "params": {"temperature", "max_tokens", "seed"}}

answered by ``{"text": ..., "finish_reason": "stop"|"length"|"error",
"latency_ms": ...}``. Media are referenced by URI and time bounds only.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence, Union

import requests

from .core import TimeInterval, ViewStream
from .errors import BackendError, BackendProtocolError, BackendTimeout, IoError, NoFixture

logger = logging.getLogger(__name__)

DEFAULT_FPS = 2.0
DEFAULT_MAX_PIXELS = 6400
DEFAULT_MAX_CONCURRENCY = 4
FINISH_REASONS = ("stop", "length", "error")


@dataclass(frozen=True)
class MediaRef:
    uri: str
    start_s: float
    end_s: float
    fps: float = DEFAULT_FPS
    max_pixels: int = DEFAULT_MAX_PIXELS

    def __post_init__(self):
        TimeInterval(self.start_s, self.end_s)
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if not self.max_pixels > 0:
            raise ValueError("max_pixels must be positive")

    @classmethod
    def from_clip(cls, view: ViewStream, interval: TimeInterval, origin_s: float = 0.0) -> "MediaRef":
        return cls(view.video_uri, origin_s + interval.start_s, origin_s + interval.end_s)

    def to_dict(self) -> dict:
        return {"uri": self.uri, "start_s": self.start_s, "end_s": self.end_s,
                "fps": self.fps, "max_pixels": self.max_pixels}


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int = 0

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens, "seed": self.seed}


@dataclass(frozen=True)
class GenerateRequest:
    model_id: str
    prompt_text: str
    media: tuple[MediaRef, ...] = ()
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        object.__setattr__(self, "media", tuple(self.media))

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "prompt_text": self.prompt_text,
                "media": [m.to_dict() for m in self.media], "params": self.params.to_dict()}


@dataclass(frozen=True)
class GenerateResponse:
    text: str
    finish_reason: str = "stop"
    latency_ms: float = 0.0

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"finish_reason {self.finish_reason!r} not in {FINISH_REASONS}")
        if self.finish_reason != "error" and self.text is None:
            raise ValueError("text required unless finish_reason is 'error'")


def fingerprint(request: GenerateRequest) -> str:
    """Stable SHA-256 over prompt text and the ordered media bounds.

    Model id and generation params are excluded so fixtures survive
    parameter changes; media order is included.
    """
    payload = {
        "prompt_text": request.prompt_text,
        "media": [[m.uri, _num(m.start_s), _num(m.end_s)] for m in request.media],
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _num(x: float) -> str:
    return f"{float(x):.6f}"


class Backend(Protocol):
    def generate(self, request: GenerateRequest) -> GenerateResponse:
        ...


_semaphores: dict[int, threading.BoundedSemaphore] = {}
_semaphore_lock = threading.Lock()


def concurrency_gate(limit: int = DEFAULT_MAX_CONCURRENCY) -> threading.BoundedSemaphore:
    """Process-wide semaphore bounding in-flight requests for a given limit."""
    with _semaphore_lock:
        if limit not in _semaphores:
            _semaphores[limit] = threading.BoundedSemaphore(limit)
        return _semaphores[limit]


class HttpBackend:
    """JSON-over-HTTP backend with bounded retries and exponential backoff.

    Timeouts, connection errors and 5xx responses are retried; anything else
    fails immediately. ``max_retries`` counts retries, so at most
    ``max_retries + 1`` requests are sent.
    """

    def __init__(self, base_url: Optional[str] = None, *, timeout_s: Optional[float] = None,
                 max_retries: int = 3, backoff_s: float = 0.5, backoff_factor: float = 2.0,
                 token: Optional[str] = None, max_concurrency: int = DEFAULT_MAX_CONCURRENCY,
                 session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        base_url = base_url or os.environ.get("PVIR_BACKEND_URL")
        if not base_url:
            raise ValueError("no backend URL given and PVIR_BACKEND_URL is unset")
        if timeout_s is None:
            timeout_s = float(os.environ.get("PVIR_BACKEND_TIMEOUT_S", "120"))
        self.url = base_url.rstrip("/") + "/v1/generate"
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.backoff_factor = backoff_factor
        self.token = token
        self.session = session or requests.Session()
        self._sleep = sleep
        self._gate = concurrency_gate(max_concurrency)

    def delay(self, retry: int) -> float:
        """Pause before retry number ``retry`` (1-based)."""
        return self.backoff_s * self.backoff_factor ** (retry - 1)

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        fp = fingerprint(request)
        headers = {"Content-Type": "application/json; charset=utf-8"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body = json.dumps(request.to_dict(), ensure_ascii=False).encode("utf-8")
        last: BackendError = BackendTimeout("no attempt made", fingerprint=fp)
        for attempt in range(self.max_retries + 1):
            if attempt:
                pause = self.delay(attempt)
                logger.warning("backend retry %d/%d in %.2fs: %s", attempt, self.max_retries, pause, last)
                self._sleep(pause)
            try:
                with self._gate:
                    resp = self.session.post(self.url, data=body, headers=headers, timeout=self.timeout_s)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last = BackendTimeout(f"{type(exc).__name__}: {exc}", fingerprint=fp)
                continue
            if resp.status_code >= 500:
                last = BackendProtocolError(f"HTTP {resp.status_code}", fingerprint=fp)
                continue
            if resp.status_code != 200:
                raise BackendProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}", fingerprint=fp)
            return _parse_response(resp, fp)
        raise last


def _parse_response(resp, fp: str) -> GenerateResponse:
    try:
        data = resp.json()
        response = GenerateResponse(text=data.get("text"), finish_reason=data.get("finish_reason", "stop"),
                                    latency_ms=float(data.get("latency_ms", 0.0)))
    except (ValueError, TypeError, AttributeError) as exc:
        raise BackendProtocolError(f"malformed response: {exc}", fingerprint=fp) from exc
    if response.finish_reason == "error":
        raise BackendProtocolError(f"backend reported error: {response.text}", fingerprint=fp)
    return response


ScriptStep = Union[str, GenerateResponse, BaseException]


class MockBackend:
    """Deterministic backend answering from fixtures keyed by request fingerprint.

    ``script`` is an optional queue of steps consumed one per call before
    fixtures are consulted; a step may be a text, a response, or an exception
    instance to raise. ``calls`` records every request received.
    """

    def __init__(self, fixtures: Optional[Mapping[str, str]] = None, *,
                 script: Iterable[ScriptStep] = (), default: Optional[str] = None):
        self.fixtures: dict[str, str] = dict(fixtures or {})
        self.script: list[ScriptStep] = list(script)
        self.default = default
        self.calls: list[GenerateRequest] = []
        self._lock = threading.Lock()

    def add(self, request_or_fp: Union[GenerateRequest, str], text: str) -> str:
        fp = request_or_fp if isinstance(request_or_fp, str) else fingerprint(request_or_fp)
        self.fixtures[fp] = text
        return fp

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        fp = fingerprint(request)
        with self._lock:
            self.calls.append(request)
            step = self.script.pop(0) if self.script else None
        if step is not None:
            if isinstance(step, BaseException):
                raise step
            if isinstance(step, GenerateResponse):
                return step
            return GenerateResponse(text=str(step))
        if fp in self.fixtures:
            return GenerateResponse(text=self.fixtures[fp])
        if self.default is not None:
            return GenerateResponse(text=self.default)
        raise NoFixture("no fixture for request", fingerprint=fp)

    @property
    def call_count(self) -> int:
        return len(self.calls)


INDEX_FILE = "index.json"


def save_fixtures(directory, fixtures: Mapping[str, str], names: Optional[Mapping[str, str]] = None) -> None:
    """Write ``{fingerprint}.txt`` files plus ``index.json`` (human name -> fingerprint)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fp, text in fixtures.items():
        (directory / f"{fp}.txt").write_text(text, encoding="utf-8")
    index = dict(sorted((names or {}).items()))
    (directory / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_fixtures(directory) -> dict[str, str]:
    directory = Path(directory)
    if not directory.is_dir():
        raise IoError(f"fixture directory not found: {directory}")
    return {p.stem: p.read_text(encoding="utf-8") for p in sorted(directory.glob("*.txt"))}


def load_fixture_index(directory) -> dict[str, str]:
    path = Path(directory) / INDEX_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def media_for_clips(clips: Sequence[tuple[ViewStream, TimeInterval]], origin_s: float = 0.0) -> tuple[MediaRef, ...]:
    return tuple(MediaRef.from_clip(view, interval, origin_s) for view, interval in clips)
