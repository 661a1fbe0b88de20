"""In-process OpenAI-compatible mock server for tests and dry runs."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable, Optional, Union

from ..core import Sample
from ..templates import DEFAULT_MARKERS, MarkerTokens, render, render_sample_label
from .http import build_wire_messages

Reply = Union[str, tuple[int, str]]


def request_key(wire_messages: list[dict]) -> str:
    """Identity of a request by its text and image parts."""
    return json.dumps(wire_messages, sort_keys=True, ensure_ascii=False)


class EchoResponder:
    """Answers each known request with the sample's rendered ground-truth label."""

    def __init__(self, samples: Iterable[Sample], markers: MarkerTokens = DEFAULT_MARKERS, image_mode="uri"):
        self.answers: dict[str, str] = {}
        for s in samples:
            wire = build_wire_messages(render(s, markers).messages, s.image_refs, image_mode)
            self.answers[request_key(wire)] = render_sample_label(s, markers)

    def __call__(self, payload: dict) -> Reply:
        answer = self.answers.get(request_key(payload.get("messages", [])))
        if answer is None:
            return 404, "unknown request"
        return answer


def _reply_body(model: str, text: str) -> dict:
    return {
        "id": "mock-completion",
        "object": "chat.completion",
        "model": model,
        "choices": [
            {"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}
        ],
    }


class MockChatServer:
    """Threaded HTTP server answering ``POST .../chat/completions``.

    ``responder`` maps the request JSON to either the reply text or a
    ``(status, body)`` pair. ``script`` is a list of statuses returned, in
    order, before the responder is consulted (e.g. ``[429, 429]``).
    """

    def __init__(
        self,
        responder: Optional[Callable[[dict], Reply]] = None,
        script: Iterable[int] = (),
        delay_s: float = 0.0,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.responder = responder or (lambda payload: "ok")
        self.script = list(script)
        self.delay_s = delay_s
        self.calls = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self.payloads: list[dict] = []
        self.headers: list[dict] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer((host, port), self._handler_class())
        self._server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = 0
            self.max_in_flight = 0
            self.payloads.clear()
            self.headers.clear()

    def _handle(self, payload: dict, headers: dict) -> tuple[int, dict]:
        with self._lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self.payloads.append(payload)
            self.headers.append(headers)
            scripted = self.script.pop(0) if self.script else None
        try:
            if self.delay_s:
                time.sleep(self.delay_s)
            if scripted is not None and scripted != 200:
                return scripted, {"error": {"message": f"scripted {scripted}"}}
            reply = self.responder(payload)
            if isinstance(reply, tuple):
                status, text = reply
                if status != 200:
                    return status, {"error": {"message": text}}
                reply = text
            return 200, _reply_body(payload.get("model", ""), reply)
        finally:
            with self._lock:
                self.in_flight -= 1

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                if not self.path.rstrip("/").endswith("/chat/completions"):
                    self._send(404, {"error": {"message": "not found"}})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    payload = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._send(400, {"error": {"message": "invalid JSON"}})
                    return
                status, body = server._handle(payload, dict(self.headers))
                self._send(status, body)

            def _send(self, status, body):
                data = json.dumps(body, ensure_ascii=False).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, fmt, *args):
                pass

        return Handler

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
