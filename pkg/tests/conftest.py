from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


@dataclass
class MockCDN:
    """Scripted subtitle server. ``routes[path]`` is a list of (status, body)
    served in order; the last entry repeats once the list is exhausted."""

    routes: dict = field(default_factory=dict)
    delay: float = 0.0
    calls: list = field(default_factory=list)
    in_flight: int = 0
    max_in_flight: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)
    base_url: str = ""

    def url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def handle(self, path: str):
        with self.lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            self.calls.append((path.split("?")[0], time.monotonic()))
            script = self.routes.get(path.split("?")[0], [(404, b"")])
            status, body = script.pop(0) if len(script) > 1 else script[0]
        try:
            if self.delay:
                time.sleep(self.delay)
            return status, body
        finally:
            with self.lock:
                self.in_flight -= 1

    def calls_to(self, path: str) -> list[float]:
        return [t for p, t in self.calls if p == path]


@pytest.fixture
def mock_cdn():
    cdn = MockCDN()

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            status, body = cdn.handle(self.path)
            self.send_response(status)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    server.daemon_threads = True
    cdn.base_url = f"http://127.0.0.1:{server.server_address[1]}"
    thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)
    thread.start()
    yield cdn
    server.shutdown()
    server.server_close()


@pytest.fixture
def no_network(monkeypatch):
    """Any attempt to open a socket fails the test."""
    import socket

    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)
