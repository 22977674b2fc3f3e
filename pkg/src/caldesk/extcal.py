"""Simulated external calendar provider.

Serves named calendars as ICS over HTTP, accepts single-event pushes, and
keeps a per-calendar request log so tests can prove that a consumer only
ever issued GETs against it.
"""

from __future__ import annotations

import hashlib
import threading

import requests

from .errors import MalformedIcs, NotFound, StaleSequence, Unreachable, UnsupportedFeature
from .httpbase import BaseHandler, Clock, RunningServer, start_server
from .ics import parse_ics, parse_vevent_fragment, serialize_event, serialize_ics
from .model import AgentId, Calendar, Event, Instant

SERVICE_AGENT = AgentId("http://extcal.example/service")


class ExternalCalendarService:
    """In-memory map of calendar id to calendar, plus request bookkeeping."""

    def __init__(self, *, clock: Clock | None = None):
        self.clock = clock or Clock()
        self._lock = threading.RLock()
        self._calendars: dict[str, Calendar] = {}
        self._logs: dict[str, list[tuple[str, str, str, Instant]]] = {}

    def put_calendar(self, cal_id: str, calendar: Calendar) -> None:
        with self._lock:
            self._calendars[cal_id] = calendar
            self._logs.setdefault(cal_id, [])

    def get_calendar(self, cal_id: str) -> Calendar:
        with self._lock:
            calendar = self._calendars.get(cal_id)
        if calendar is None:
            raise NotFound(f"no calendar {cal_id!r}")
        return calendar

    def serve_ics(self, cal_id: str) -> tuple[bytes, str]:
        """ICS body and its etag (content hash)."""
        body = serialize_ics(self.get_calendar(cal_id)).encode("utf-8")
        return body, hashlib.sha256(body).hexdigest()

    def create_event(self, cal_id: str, event: Event) -> None:
        """Add or update one event. Updates must advance the sequence number."""
        with self._lock:
            calendar = self._calendars.get(cal_id)
            if calendar is None:
                calendar = Calendar.of(SERVICE_AGENT)
                self._logs.setdefault(cal_id, [])
            current = calendar.events.get(event.uid)
            if current is not None and event.version.sequence <= current.version.sequence:
                raise StaleSequence(
                    f"{event.uid}: sequence {event.version.sequence} "
                    f"does not advance past {current.version.sequence}"
                )
            events = dict(calendar.events)
            events[event.uid] = event
            self._calendars[cal_id] = calendar.with_events(events.values())

    def log(self, cal_id: str) -> list[tuple[str, str, str, Instant]]:
        """Recorded requests as (method, path, requester user agent, when)."""
        with self._lock:
            if cal_id not in self._logs:
                raise NotFound(f"no calendar {cal_id!r}")
            return list(self._logs[cal_id])

    def record(self, cal_id: str, method: str, path: str, agent: str = "") -> None:
        with self._lock:
            self._logs.setdefault(cal_id, []).append((method, path, agent, self.clock.now()))


def make_extcal_handler(service: ExternalCalendarService) -> type[BaseHandler]:
    class ExtCalHandler(BaseHandler):
        def _guarded(self, action) -> None:
            try:
                action()
            except NotFound as exc:
                self.send_text(404, f"not found: {exc}\n")
            except StaleSequence as exc:
                self.send_text(409, f"stale sequence: {exc}\n")
            except (MalformedIcs, UnsupportedFeature, ValueError) as exc:
                self.send_text(400, f"bad request: {exc}\n")

        def do_GET(self):
            self._guarded(self._get)

        def do_POST(self):
            self._guarded(self._post)

        def do_PUT(self):
            self._guarded(self._put)

        def _get(self):
            if self.path == "/_health":
                self.send_text(200, "ok\n")
                return
            if self.path.startswith("/cal/") and self.path.endswith("/_log"):
                cal_id = self.path[len("/cal/"): -len("/_log")]
                lines = [
                    f"{method} {path} {when.iso()} {agent}\n"
                    for method, path, agent, when in service.log(cal_id)
                ]
                self.send_text(200, "".join(lines))
                return
            if self.path.startswith("/cal/") and self.path.endswith(".ics"):
                cal_id = self.path[len("/cal/"): -len(".ics")]
                service.record(cal_id, "GET", self.path, self.headers.get("User-Agent", ""))
                body, etag = service.serve_ics(cal_id)
                if self.headers.get("If-None-Match") == etag:
                    self.send_body(304, b"", "text/calendar", extra_headers={"ETag": etag})
                    return
                self.send_body(200, body, "text/calendar; charset=utf-8",
                               extra_headers={"ETag": etag})
                return
            raise NotFound(self.path)

        def _post(self):
            if self.path.startswith("/cal/") and self.path.endswith("/events"):
                cal_id = self.path[len("/cal/"): -len("/events")]
                service.record(cal_id, "POST", self.path, self.headers.get("User-Agent", ""))
                event = parse_vevent_fragment(self.read_body().decode("utf-8"))
                service.create_event(cal_id, event)
                self.send_text(201, "created\n")
                return
            raise NotFound(self.path)

        def _put(self):
            if self.path.startswith("/cal/") and "/" not in self.path[len("/cal/"):]:
                cal_id = self.path[len("/cal/"):]
                service.record(cal_id, "PUT", self.path, self.headers.get("User-Agent", ""))
                calendar = parse_ics(self.read_body().decode("utf-8"), owner=SERVICE_AGENT)
                service.put_calendar(cal_id, calendar)
                self.send_text(200, "ok\n")
                return
            raise NotFound(self.path)

    return ExtCalHandler


def serve_extcal(service: ExternalCalendarService, host: str = "127.0.0.1",
                 port: int = 0) -> RunningServer:
    return start_server(make_extcal_handler(service), host, port)


def fetch_ics(url: str, *, owner: AgentId | None = None, origin: str = "",
              etag: str | None = None, timeout: float = 10.0,
              user_agent: str = "caldesk-client/0.1") -> tuple[Calendar | None, str]:
    """GET an ICS document and parse it.

    Returns (calendar, etag); calendar is None when the server answers 304
    for the etag we already hold.
    """
    headers = {"User-Agent": user_agent}
    if etag is not None:
        headers["If-None-Match"] = etag
    try:
        response = requests.get(url, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise Unreachable(f"GET {url}: {exc}") from exc
    if response.status_code == 304:
        return None, etag or ""
    if response.status_code == 404:
        raise NotFound(url)
    if response.status_code >= 400:
        raise Unreachable(f"GET {url}: HTTP {response.status_code}")
    kwargs = {"origin": origin}
    if owner is not None:
        kwargs["owner"] = owner
    calendar = parse_ics(response.content.decode("utf-8"), **kwargs)
    return calendar, response.headers.get("ETag", "")


def create_event_remote(push_url: str, event: Event, *, timeout: float = 10.0,
                        user_agent: str = "caldesk-client/0.1") -> None:
    """POST one event to a calendar's events endpoint."""
    url = push_url.rstrip("/") + "/events"
    body = serialize_event(event).encode("utf-8")
    try:
        response = requests.post(
            url,
            headers={"User-Agent": user_agent, "Content-Type": "text/calendar; charset=utf-8"},
            data=body,
            timeout=timeout,
        )
    except requests.RequestException as exc:
        raise Unreachable(f"POST {url}: {exc}") from exc
    if response.status_code == 409:
        raise StaleSequence(response.text.strip())
    if response.status_code == 404:
        raise NotFound(url)
    if response.status_code >= 400:
        raise Unreachable(f"POST {url}: HTTP {response.status_code}: {response.text.strip()}")
