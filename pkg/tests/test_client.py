import json
import random
import threading

import httpx
import pytest

from factories import sample_of
from medvlkit.client import (
    ChatClient,
    EchoResponder,
    EndpointConfig,
    MockChatServer,
    PredictionCache,
    RateLimiter,
    RunStats,
    build_wire_messages,
    cache_key,
    decoding_for,
    run_inference,
    run_synthesis,
)
from medvlkit.client.config import Decoding
from medvlkit.core import ParseFailed, TaskKind
from medvlkit.dataengine import PoolItem, plan_alignment
from medvlkit.errors import AuthFailed, BadRequest, ConfigError, EndpointError, EndpointTimeout, RateLimited
from medvlkit.scoring import score_corpus

MSG = (("user", "<image> given the image, please provide a brief answer to What is this?"),)


@pytest.fixture
def sleeps():
    return []


def client_for(server, sleeps, **cfg):
    cfg.setdefault("model_id", "m")
    return ChatClient(EndpointConfig(server.url, **cfg), sleep=sleeps.append, rng=random.Random(0))


def test_echo_canned_string(sleeps):
    with MockChatServer(lambda payload: "canned answer") as server, client_for(server, sleeps) as c:
        out = c.chat_complete(MSG, ["a.png"])
    assert out.text == "canned answer" and out.retries == 0
    assert server.calls == 1


def test_wire_format(sleeps, monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "s3cret")
    with MockChatServer() as server, client_for(server, sleeps, api_key_env="TEST_TOKEN") as c:
        c.chat_complete((("system", "be brief"),) + MSG, ["a.png"], Decoding(0.0, 32))
    payload = server.payloads[0]
    assert payload["model"] == "m" and payload["temperature"] == 0.0 and payload["max_tokens"] == 32
    assert payload["messages"][0] == {"role": "system", "content": "be brief"}
    assert payload["messages"][1]["content"] == [
        {"type": "image_url", "image_url": {"url": "a.png"}},
        {"type": "text", "text": "given the image, please provide a brief answer to What is this?"},
    ]
    assert server.headers[0]["Authorization"] == "Bearer s3cret"


def test_images_without_placeholder_go_first():
    wire = build_wire_messages((("user", "Find the liver."),), ["x.nii"])
    assert wire[0]["content"][0]["type"] == "image_url"
    assert wire[0]["content"][1] == {"type": "text", "text": "Find the liver."}


def test_inline_images(tmp_path):
    img = tmp_path / "a.png"
    img.write_bytes(b"\x89PNG fake")
    wire = build_wire_messages((("user", "<image> hi"),), [str(img)], "inline")
    assert wire[0]["content"][0]["image_url"]["url"].startswith("data:image/png;base64,")


def test_retry_after_two_429(sleeps):
    with MockChatServer(lambda p: "ok", script=[429, 429]) as server, client_for(server, sleeps) as c:
        out = c.chat_complete(MSG, ["a.png"])
    assert out.text == "ok" and out.retries == 2
    assert server.calls == 3
    assert len(sleeps) == 2
    # exponential with jitter in [0.5, 1) of the base
    assert 0.25 <= sleeps[0] < 0.5 and 0.5 <= sleeps[1] < 1.0


def test_5xx_retried_then_gives_up(sleeps):
    with MockChatServer(lambda p: (503, "busy")) as server, client_for(server, sleeps, max_retries=2) as c:
        with pytest.raises(EndpointError) as info:
            c.chat_complete(MSG, ["a.png"], sample_id="s1")
    assert server.calls == 3
    assert info.value.status == 503 and info.value.sample_id == "s1" and info.value.retries == 2


def test_rate_limited_after_retries(sleeps):
    with MockChatServer(lambda p: (429, "slow down")) as server, client_for(server, sleeps, max_retries=1) as c:
        with pytest.raises(RateLimited):
            c.chat_complete(MSG, ["a.png"])


def test_401_fails_fast(sleeps):
    with MockChatServer(lambda p: (401, "no")) as server, client_for(server, sleeps) as c:
        with pytest.raises(AuthFailed):
            c.chat_complete(MSG, ["a.png"])
    assert server.calls == 1 and sleeps == []


def test_400_fails_fast(sleeps):
    with MockChatServer(lambda p: (400, "bad")) as server, client_for(server, sleeps) as c:
        with pytest.raises(BadRequest):
            c.chat_complete(MSG, ["a.png"])
    assert server.calls == 1


def test_timeout_retried(sleeps):
    attempts = []

    def handler(request):
        attempts.append(1)
        if len(attempts) == 1:
            raise httpx.ReadTimeout("slow", request=request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "late"}}]})

    cfg = EndpointConfig("http://unused/v1", "m")
    with ChatClient(cfg, transport=httpx.MockTransport(handler), sleep=sleeps.append) as c:
        out = c.chat_complete(MSG)
    assert out.text == "late" and out.retries == 1

    def always(request):
        raise httpx.ReadTimeout("slow", request=request)

    with ChatClient(cfg.replace(max_retries=1), transport=httpx.MockTransport(always), sleep=sleeps.append) as c:
        with pytest.raises(EndpointTimeout):
            c.chat_complete(MSG)


def test_retry_after_header_honoured(sleeps):
    def handler(request):
        if not sleeps:
            return httpx.Response(429, headers={"Retry-After": "7"})
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    with ChatClient(EndpointConfig("http://x/v1", "m"), transport=httpx.MockTransport(handler), sleep=sleeps.append) as c:
        c.chat_complete(MSG)
    assert sleeps == [7.0]


def test_rate_limiter_spacing():
    now = [0.0]
    waits = []
    limiter = RateLimiter(4.0, clock=lambda: now[0], sleep=waits.append)
    for _ in range(3):
        limiter.wait()
    assert waits == [0.25, 0.5]


@pytest.mark.parametrize("bad", [{"timeout_s": 0}, {"parallelism": 0}, {"max_rps": -1}, {"image_mode": "pixels"}, {"colour": "red"}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        EndpointConfig.from_dict({"base_url": "http://x", "model_id": "m", **bad})


def test_cache_key_stability():
    k = cache_key("m", MSG, ["a.png"], Decoding())
    assert k == cache_key("m", tuple(MSG), ("a.png",), Decoding())
    assert len(k) == 64
    assert k != cache_key("m2", MSG, ["a.png"], Decoding())
    assert k != cache_key("m", MSG, ["b.png"], Decoding())
    assert k != cache_key("m", MSG, ["a.png"], Decoding(0.0, 65))


def test_cache_append_only(tmp_path):
    cache = PredictionCache(tmp_path)
    assert cache.put("ab" * 32, {"raw_text": "first"})
    assert not cache.put("ab" * 32, {"raw_text": "second"})
    assert cache.get("ab" * 32) == {"raw_text": "first"}
    assert len(cache) == 1 and "ab" * 32 in cache and cache.get("cd" * 32) is None


# --- batch inference ------------------------------------------------------------------


def _samples(n=12):
    rng = random.Random(1)
    tasks = list(TaskKind)
    return [sample_of(tasks[i % len(tasks)], i, rng) for i in range(n)]


def test_run_inference_echo_and_cache(tmp_path):
    samples = _samples(14)
    cache = PredictionCache(tmp_path)
    with MockChatServer(EchoResponder(samples)) as server:
        cfg = EndpointConfig(server.url, "echo", parallelism=3)
        first = list(run_inference(samples, cfg, cache))
        assert server.calls == 14
        server.reset_counters()
        stats = RunStats()
        second = list(run_inference(samples, cfg, cache, stats=stats))
        assert server.calls == 0
    assert first == second
    assert stats.cache_hits == 14 and stats.requests == 0
    assert [p.sample_id for p in first] == [s.id for s in samples]
    reports = score_corpus(samples, first)
    assert all(r.n_parse_failed == 0 for r in reports)


def test_parallelism_bound_and_order():
    samples = _samples(10)
    with MockChatServer(EchoResponder(samples), delay_s=0.02) as server:
        cfg = EndpointConfig(server.url, "echo", parallelism=3)
        preds = list(run_inference(samples, cfg))
        assert 1 <= server.max_in_flight <= 3
    assert [p.sample_id for p in preds] == [s.id for s in samples]


def test_order_under_random_completion():
    samples = _samples(20)
    echo = EchoResponder(samples)
    lock = threading.Lock()
    rng = random.Random(3)

    def slow_echo(payload):
        with lock:
            d = rng.random() * 0.03
        threading.Event().wait(d)
        return echo(payload)

    with MockChatServer(slow_echo) as server:
        preds = list(run_inference(samples, EndpointConfig(server.url, "echo", parallelism=6)))
    assert [p.sample_id for p in preds] == [s.id for s in samples]
    assert all(not isinstance(p.parsed, ParseFailed) for p in preds)


def test_transport_failure_marked_not_fatal():
    samples = _samples(4)
    bad_image = samples[1].image_refs[0]

    def responder(payload):
        return (500, "boom") if bad_image in json.dumps(payload["messages"]) else "whatever"

    with MockChatServer(responder) as server:
        cfg = EndpointConfig(server.url, "m", max_retries=1, backoff_base_s=0.001)
        stats = RunStats()
        preds = list(run_inference(samples, cfg, stats=stats))
    assert len(preds) == 4
    assert isinstance(preds[1].parsed, ParseFailed) and preds[1].parsed.reason.startswith("transport error")
    assert preds[1].error and "EndpointError" in preds[1].error
    assert [sid for sid, _ in stats.failures] == [samples[1].id]


def test_auth_failure_aborts_run():
    with MockChatServer(lambda p: (401, "no")) as server:
        with pytest.raises(AuthFailed):
            list(run_inference(_samples(3), EndpointConfig(server.url, "m")))


def test_decoding_budget():
    assert decoding_for(TaskKind.REPORT_GEN).max_tokens > decoding_for(TaskKind.VQA_CLOSED).max_tokens
    assert decoding_for(TaskKind.LANDMARK).temperature == 0.0


# --- synthesis -----------------------------------------------------------------------


def _jobs(n_pool=8):
    pool = [PoolItem(f"p/{i}.png", f"caption {i}") for i in range(n_pool)]
    return plan_alignment(pool, 0, 1.0)[1]


def test_run_synthesis_fixed_text_and_cache(tmp_path):
    jobs = _jobs()
    cache = PredictionCache(tmp_path)
    with MockChatServer(lambda p: "Both are chest films; the first shows an effusion.") as server:
        cfg = EndpointConfig(server.url, "gpt")
        out = run_synthesis(jobs, cfg, cache)
        assert server.calls == len(jobs)
        # synthesis prompts carry captions only, never images
        assert all(isinstance(m["content"], str) for p in server.payloads for m in p["messages"])
        server.reset_counters()
        again = run_synthesis(jobs, cfg, cache)
        assert server.calls == 0
    assert out == again
    assert len(out) == len(jobs)
    assert all(s.origin == "synthetic" and len(s.image_refs) == 2 for s in out)
    assert out[0].text == "Both are chest films; the first shows an effusion."


def test_run_synthesis_skips_failed_job():
    jobs = _jobs()
    doomed = jobs[2].prompt

    def responder(payload):
        return (500, "down") if payload["messages"][0]["content"] == doomed else "answer"

    with MockChatServer(responder) as server:
        stats = RunStats()
        out = run_synthesis(jobs, EndpointConfig(server.url, "gpt", max_retries=0), stats=stats)
    assert len(out) == len(jobs) - 1
    assert [j for j, _ in stats.failures] == [jobs[2].job_id]
    assert jobs[2].image_refs not in [s.image_refs for s in out]


def test_run_synthesis_empty_answer_skipped():
    with MockChatServer(lambda p: "  ") as server:
        stats = RunStats()
        out = run_synthesis(_jobs(4), EndpointConfig(server.url, "gpt"), stats=stats)
    assert out == [] and len(stats.failures) == 2
