"""Shared scaffolding for the in-process HTTP servers and clients."""

from __future__ import annotations

import errno
import logging
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import CaldeskError
from .model import Instant

log = logging.getLogger(__name__)


class Clock:
    """Time source; injectable so tests and scenarios stay deterministic."""

    def now(self) -> Instant:
        return Instant(int(time.time()))


class ManualClock(Clock):
    """A clock that only moves when told to."""

    def __init__(self, start: Instant):
        self._now = start
        self._lock = threading.Lock()

    def now(self) -> Instant:
        with self._lock:
            return self._now

    def advance(self, seconds: int) -> Instant:
        with self._lock:
            self._now = self._now.plus(seconds)
            return self._now

    def set(self, instant: Instant) -> None:
        with self._lock:
            self._now = instant


class AddressInUse(CaldeskError):
    """The requested listen address is already bound."""


class BaseHandler(BaseHTTPRequestHandler):
    """Common request handler behavior: HTTP/1.1, quiet logging, body helpers."""

    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        log.debug("%s - %s", self.address_string(), format % args)

    def read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0) or 0)
        return self.rfile.read(length) if length else b""

    def send_body(self, status: int, body: bytes, content_type: str = "text/plain; charset=utf-8",
                  extra_headers: dict[str, str] | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Expose-Headers", "ETag, Location, X-Sender, X-Processed")
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):  # browser preflight for the web client
        self.send_empty(204, extra_headers={
            "Access-Control-Allow-Origin": "*",
            "Access-Control-Allow-Methods": "GET, PUT, POST, DELETE, OPTIONS",
            "Access-Control-Allow-Headers":
                "Authorization, Content-Type, If-Match, If-None-Match, X-Owner-Secret",
        })

    def send_text(self, status: int, text: str, **kwargs) -> None:
        self.send_body(status, text.encode("utf-8"), **kwargs)

    def send_empty(self, status: int, extra_headers: dict[str, str] | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Length", "0")
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.end_headers()

    def bearer_token(self) -> str | None:
        auth = self.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            return auth[len("Bearer "):].strip()
        return None


class RunningServer:
    """A ThreadingHTTPServer running on a daemon thread."""

    def __init__(self, httpd: ThreadingHTTPServer):
        self.httpd = httpd
        self.thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)


class _QuietServer(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address):
        # clients abandoning a pooled keep-alive connection mid-request are
        # routine; anything else keeps the stdlib's stderr dump
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError)):
            log.debug("client %s disconnected: %s", client_address, exc)
            return
        super().handle_error(request, client_address)


def start_server(handler_cls: type[BaseHandler], host: str = "127.0.0.1", port: int = 0) -> RunningServer:
    """Bind and start serving; port 0 picks a free ephemeral port."""
    try:
        httpd = _QuietServer((host, port), handler_cls)
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise AddressInUse(f"{host}:{port} is already in use") from exc
        raise
    return RunningServer(httpd)
