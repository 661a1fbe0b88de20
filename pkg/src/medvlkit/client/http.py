"""OpenAI-compatible chat-completions client with retry and rate limiting."""

from __future__ import annotations

import base64
import logging
import mimetypes
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx

from ..errors import (
    AuthFailed,
    BadRequest,
    EndpointError,
    EndpointTimeout,
    RateLimited,
)
from ..templates import IMAGE_PLACEHOLDER
from .config import Decoding, EndpointConfig

log = logging.getLogger(__name__)

TRANSIENT_STATUSES = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class Completion:
    text: str
    retries: int
    latency_ms: float


class RateLimiter:
    """Spaces request starts at least ``1 / rps`` seconds apart."""

    def __init__(self, rps: Optional[float], clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / rps if rps else 0.0
        self._next = 0.0
        self._lock = threading.Lock()
        self._clock = clock
        self._sleep = sleep

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = self._clock()
            start = max(now, self._next)
            self._next = start + self.interval
        if start > now:
            self._sleep(start - now)


def image_url(ref: str, mode: str = "uri") -> str:
    """URL for an image part; ``inline`` embeds local files as base64."""
    if mode == "uri" or "://" in ref or ref.startswith("data:"):
        return ref
    path = Path(ref)
    mime = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:{mime};base64,{data}"


def build_wire_messages(
    messages: Sequence[tuple[str, str]], image_refs: Sequence[str], image_mode: str = "uri"
) -> list[dict]:
    """Turn rendered messages into chat-completions messages.

    Each ``<image>`` placeholder in user text becomes an ``image_url`` part
    at the same position. Images without a placeholder are put ahead of
    the last user message's text.
    """
    urls = [image_url(r, image_mode) for r in image_refs]
    pending = list(urls)
    out = []
    user_idx = [i for i, (role, _) in enumerate(messages) if role == "user"]
    last_user = user_idx[-1] if user_idx else None
    for i, (role, text) in enumerate(messages):
        if role != "user" or not urls:
            out.append({"role": role, "content": text})
            continue
        parts: list[dict] = []
        segments = text.split(IMAGE_PLACEHOLDER)
        for k, seg in enumerate(segments):
            if k > 0:
                if not pending:
                    raise BadRequest("more image placeholders than images")
                parts.append({"type": "image_url", "image_url": {"url": pending.pop(0)}})
            if seg.strip():
                parts.append({"type": "text", "text": seg.strip()})
        out.append({"role": role, "content": parts})
    if pending:
        if last_user is None:
            raise BadRequest("images given but no user message")
        head = [{"type": "image_url", "image_url": {"url": u}} for u in pending]
        out[last_user]["content"] = head + out[last_user]["content"]
    return out


def _content_text(content) -> str:
    if isinstance(content, str):
        return content
    if isinstance(content, list):
        return "".join(p.get("text", "") for p in content if isinstance(p, dict))
    return ""


class ChatClient:
    def __init__(
        self,
        cfg: EndpointConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.cfg = cfg
        headers = {}
        token = os.environ.get(cfg.api_key_env) if cfg.api_key_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(
            timeout=cfg.timeout_s,
            headers=headers,
            transport=transport,
            limits=httpx.Limits(max_connections=max(cfg.parallelism, 1) * 2),
        )
        self._url = cfg.base_url.rstrip("/") + "/chat/completions"
        self._limiter = RateLimiter(cfg.max_rps, sleep=sleep)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._count_lock = threading.Lock()
        self.requests_sent = 0

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def payload(self, messages, image_refs=(), decoding: Decoding = Decoding()) -> dict:
        return {
            "model": self.cfg.model_id,
            "messages": build_wire_messages(messages, image_refs, self.cfg.image_mode),
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }

    def _backoff(self, attempt: int, retry_after: Optional[str]) -> float:
        if retry_after:
            try:
                return min(self.cfg.backoff_cap_s, float(retry_after))
            except ValueError:
                pass
        base = min(self.cfg.backoff_cap_s, self.cfg.backoff_base_s * 2**attempt)
        return base * (0.5 + 0.5 * self._rng.random())

    def chat_complete(
        self,
        messages: Sequence[tuple[str, str]],
        image_refs: Sequence[str] = (),
        decoding: Decoding = Decoding(),
        sample_id: Optional[str] = None,
    ) -> Completion:
        """POST one request, retrying 429/5xx/timeouts with jittered backoff."""
        body = self.payload(messages, image_refs, decoding)
        last: Optional[EndpointError] = None
        t0 = time.perf_counter()
        for attempt in range(self.cfg.max_retries + 1):
            self._limiter.wait()
            with self._count_lock:
                self.requests_sent += 1
            retry_after = None
            try:
                resp = self._http.post(self._url, json=body)
            except httpx.TimeoutException as exc:
                last = EndpointTimeout(f"timeout: {exc}", sample_id, retries=attempt)
            except httpx.TransportError as exc:
                last = EndpointError(f"transport error: {exc}", sample_id, retries=attempt)
            else:
                status = resp.status_code
                if 200 <= status < 300:
                    try:
                        text = _content_text(resp.json()["choices"][0]["message"]["content"])
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise EndpointError(f"malformed response: {exc!r}", sample_id, status, attempt) from exc
                    latency = (time.perf_counter() - t0) * 1000.0
                    return Completion(text, attempt, round(latency, 3))
                if status in (401, 403):
                    raise AuthFailed(f"HTTP {status}: {resp.text[:200]}", sample_id, status, attempt)
                if status == 429:
                    last = RateLimited("HTTP 429 rate limited", sample_id, status, attempt)
                    retry_after = resp.headers.get("retry-after")
                elif status in TRANSIENT_STATUSES or status >= 500:
                    last = EndpointError(f"HTTP {status}: {resp.text[:200]}", sample_id, status, attempt)
                else:
                    raise BadRequest(f"HTTP {status}: {resp.text[:200]}", sample_id, status, attempt)
            if attempt < self.cfg.max_retries:
                delay = self._backoff(attempt, retry_after)
                log.debug("retrying %s after %.3fs (%s)", sample_id, delay, last)
                self._sleep(delay)
        assert last is not None
        last.retries = self.cfg.max_retries
        raise last
