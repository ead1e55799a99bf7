"""Scripted OpenAI-compatible chat server for backend and concurrency tests."""

from __future__ import annotations

import json
import threading
import time
from collections.abc import Callable
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class StubServer:
    """Answers POST /v1/chat/completions.

    ``statuses`` are returned, in order, for the first requests; after that
    every request gets 200 with ``judge(body)`` as content. ``delay`` keeps
    requests in flight long enough for overlap to be observable.
    """

    def __init__(self, judge: Callable[[dict], str], *, statuses: list[int] | None = None, delay: float = 0.0):
        self.judge = judge
        self.statuses = list(statuses or [])
        self.delay = delay
        self.requests: list[dict] = []
        self.in_flight = 0
        self.high_water = 0
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub._lock:
                    stub.requests.append({"body": body, "auth": self.headers.get("Authorization")})
                    stub.in_flight += 1
                    stub.high_water = max(stub.high_water, stub.in_flight)
                    status = stub.statuses.pop(0) if stub.statuses else 200
                try:
                    time.sleep(stub.delay)
                    if status == 200:
                        payload = {
                            "choices": [{"index": 0, "message": {"role": "assistant", "content": stub.judge(body)}}],
                            "usage": {"prompt_tokens": 10, "completion_tokens": 5},
                        }
                    else:
                        payload = {"error": {"message": f"scripted {status}"}}
                    data = json.dumps(payload).encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    with stub._lock:
                        stub.in_flight -= 1

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self) -> StubServer:
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
