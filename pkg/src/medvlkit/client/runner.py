"""Batch inference and synthesis runs over a chat endpoint."""

from __future__ import annotations

import logging
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from ..core import ParseFailed, Prediction, Sample
from ..dataengine.alignment import AlignmentSample, SynthesisJob, assemble_alignment
from ..errors import AuthFailed, EmptyAnswer, EndpointError
from ..parse import parse_for_sample
from ..templates import DEFAULT_MARKERS, MarkerTokens, render
from .cache import PredictionCache
from .config import SYNTHESIS_DECODING, EndpointConfig, cache_key, decoding_for
from .http import ChatClient

log = logging.getLogger(__name__)


@dataclass
class RunStats:
    total: int = 0
    cache_hits: int = 0
    requests: int = 0
    retries: int = 0
    failures: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, **counts) -> None:
        with self._lock:
            for k, v in counts.items():
                setattr(self, k, getattr(self, k) + v)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "cache_hits": self.cache_hits,
            "requests": self.requests,
            "retries": self.retries,
            "failed": len(self.failures),
        }


def _done(value) -> Future:
    f: Future = Future()
    f.set_result(value)
    return f


def _ordered(executor, tasks: Iterable, window: int) -> Iterator:
    """Submit ``(fn, arg)`` tasks with at most ``window`` outstanding; yield results in order."""
    queue: deque = deque()
    for task in tasks:
        queue.append(task if isinstance(task, Future) else executor.submit(*task))
        if len(queue) >= window:
            yield queue.popleft().result()
    while queue:
        yield queue.popleft().result()


def _complete_cached(client, cache, stats, key, messages, image_refs, decoding, ident):
    completion = client.chat_complete(messages, image_refs, decoding, sample_id=ident)
    stats.add(requests=1, retries=completion.retries)
    entry = {"raw_text": completion.text, "latency_ms": completion.latency_ms}
    if cache is not None:
        cache.put(key, entry)
    return entry


def run_inference(
    samples: Iterable[Sample],
    cfg: EndpointConfig,
    cache: Optional[PredictionCache] = None,
    client: Optional[ChatClient] = None,
    markers: MarkerTokens = DEFAULT_MARKERS,
    stats: Optional[RunStats] = None,
) -> Iterator[Prediction]:
    """Yield one parsed Prediction per sample, in input order.

    Cache hits skip the network. Transport failures become predictions
    carrying ``error`` and a ``ParseFailed`` marker; only authentication
    failures abort the run.
    """
    stats = stats if stats is not None else RunStats()
    own_client = client is None
    client = client or ChatClient(cfg)

    def one(sample: Sample, key: str, messages, decoding) -> Prediction:
        try:
            entry = _complete_cached(
                client, cache, stats, key, messages, sample.image_refs, decoding, sample.id
            )
        except AuthFailed:
            raise
        except EndpointError as exc:
            stats.failures.append((sample.id, str(exc)))
            log.warning("inference failed for %s: %s", sample.id, exc)
            return Prediction(
                sample.id,
                "",
                ParseFailed(f"transport error: {type(exc).__name__}"),
                cfg.model_id,
                0.0,
                error=f"{type(exc).__name__}: {exc}",
            )
        return _prediction(sample, entry)

    def _prediction(sample: Sample, entry: dict) -> Prediction:
        text = entry["raw_text"]
        return Prediction(
            sample.id, text, parse_for_sample(text, sample, markers), cfg.model_id, entry["latency_ms"]
        )

    def tasks():
        for s in samples:
            stats.total += 1
            inst = render(s, markers)
            decoding = decoding_for(s.task)
            key = cache_key(cfg.model_id, inst.messages, s.image_refs, decoding)
            hit = cache.get(key) if cache is not None else None
            if hit is not None:
                stats.cache_hits += 1
                yield _done(_prediction(s, hit))
            else:
                yield (one, s, key, inst.messages, decoding)

    try:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            yield from _ordered(pool, tasks(), window=cfg.parallelism * 4)
    finally:
        if own_client:
            client.close()


def run_synthesis(
    jobs: Iterable[SynthesisJob],
    cfg: EndpointConfig,
    cache: Optional[PredictionCache] = None,
    client: Optional[ChatClient] = None,
    stats: Optional[RunStats] = None,
) -> list[AlignmentSample]:
    """Ask the LLM each job's compare prompt; failed jobs are logged and skipped.

    Only the captions are sent, so no images go over the wire.
    """
    stats = stats if stats is not None else RunStats()
    own_client = client is None
    client = client or ChatClient(cfg)

    def one(job: SynthesisJob, key: str, messages):
        try:
            entry = _complete_cached(client, cache, stats, key, messages, (), SYNTHESIS_DECODING, job.job_id)
            return assemble_alignment(job, entry["raw_text"])
        except AuthFailed:
            raise
        except (EndpointError, EmptyAnswer) as exc:
            stats.failures.append((job.job_id, str(exc)))
            log.warning("synthesis job %s failed: %s", job.job_id, exc)
            return None

    def tasks():
        for job in jobs:
            stats.total += 1
            messages = (("user", job.prompt),)
            key = cache_key(cfg.model_id, messages, (), SYNTHESIS_DECODING)
            hit = cache.get(key) if cache is not None else None
            if hit is not None:
                stats.cache_hits += 1
                try:
                    yield _done(assemble_alignment(job, hit["raw_text"]))
                except EmptyAnswer as exc:
                    stats.failures.append((job.job_id, str(exc)))
                    yield _done(None)
            else:
                yield (one, job, key, messages)

    try:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            out = [s for s in _ordered(pool, tasks(), cfg.parallelism * 4) if s is not None]
    finally:
        if own_client:
            client.close()
    if stats.failures:
        log.warning("synthesis: %d of %d jobs failed", len(stats.failures), stats.total)
    return out
