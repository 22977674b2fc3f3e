"""Joint availability over free/busy documents, clash detection, and the
two booking paths (external calendar service, pod inbox)."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import CaldeskError, WindowMismatch
from .extcal import create_event_remote
from .linked import meeting_request_doc
from .model import (
    AgentId,
    Event,
    EventStatus,
    EventVersion,
    FreeBusy,
    Calendar,
    Instant,
    Interval,
    coalesce,
)
from .podstore import PodClient

NOTIFY_BASE = "http://caldesk.example/notify/"


@dataclass(frozen=True)
class Slot:
    """A bookable candidate: exactly the requested duration, grid-aligned."""

    interval: Interval


@dataclass(frozen=True)
class MeetingRequest:
    organizer: AgentId
    participants: tuple[AgentId, ...]
    slot: Slot
    summary: str
    uid: str

    def __post_init__(self):
        if not self.participants:
            raise ValueError("a meeting needs at least one participant")
        if self.organizer not in self.participants:
            object.__setattr__(self, "participants", (self.organizer,) + tuple(self.participants))
        if not self.uid or any(c.isspace() for c in self.uid):
            raise ValueError(f"bad meeting uid: {self.uid!r}")

    def event(self, stamped: Instant) -> Event:
        return Event(
            uid=self.uid,
            interval=self.slot.interval,
            summary=self.summary,
            version=EventVersion(sequence=0, stamped=stamped),
            status=EventStatus.CONFIRMED,
        )


def joint_availability(freebusies: list[FreeBusy], window: Interval,
                       duration: int, granularity: int) -> list[Slot]:
    """Grid-aligned slots of ``duration`` inside ``window`` that intersect
    nobody's busy time.

    The grid is anchored at the window start with ``granularity`` spacing.
    Every free/busy document must cover the whole window, otherwise a gap
    in coverage would be indistinguishable from free time.
    """
    if granularity <= 0 or duration < granularity:
        raise ValueError("need duration >= granularity > 0")
    if duration % 60 or granularity % 60:
        raise ValueError("duration and granularity must be whole minutes")
    for fb in freebusies:
        if not (fb.window.start <= window.start and window.end <= fb.window.end):
            raise WindowMismatch(
                f"{fb.owner} free/busy covers {fb.window}, query needs {window}"
            )

    busy = coalesce(i for fb in freebusies for i in fb.busy)
    slots: list[Slot] = []

    def emit_range(free_start: Instant, free_end: Instant) -> None:
        # first grid point at or after free_start
        offset = free_start.seconds - window.start.seconds
        k = -(-offset // granularity)
        start = window.start.plus(k * granularity)
        while start.plus(duration) <= free_end:
            slots.append(Slot(Interval(start, start.plus(duration))))
            start = start.plus(granularity)

    cursor = window.start
    for block in busy:
        if block.end <= window.start or block.start >= window.end:
            continue
        if block.start > cursor:
            emit_range(cursor, min(block.start, window.end))
        cursor = max(cursor, block.end)
    if cursor < window.end:
        emit_range(cursor, window.end)
    return slots


def detect_clashes(cal: Calendar) -> list[tuple[str, str]]:
    """Unordered pairs of Confirmed events that overlap, reported once each
    in lexicographic uid order. Touching intervals do not clash."""
    confirmed = sorted(
        (e for e in cal.events.values() if e.status is EventStatus.CONFIRMED),
        key=lambda e: (e.interval.start, e.interval.end, e.uid),
    )
    pairs: set[tuple[str, str]] = set()
    active: list[Event] = []
    for event in confirmed:
        active = [a for a in active if a.interval.end > event.interval.start]
        for other in active:
            pairs.add(tuple(sorted((other.uid, event.uid))))
        active.append(event)
    return sorted(pairs)


@dataclass(frozen=True)
class BookingAttempt:
    participant: AgentId
    ok: bool
    detail: str


@dataclass(frozen=True)
class BookingReport:
    uid: str
    attempts: tuple[BookingAttempt, ...] = field(default_factory=tuple)

    @property
    def all_ok(self) -> bool:
        return all(a.ok for a in self.attempts)


def book_via_external(req: MeetingRequest, booking_urls: dict[AgentId, str],
                      stamped: Instant) -> BookingReport:
    """Create the meeting on every participant's external calendar.

    Failures are collected per participant; successful creations are not
    rolled back when a later one fails.
    """
    missing = [p for p in req.participants if p not in booking_urls]
    if missing:
        raise ValueError(f"no booking url for {', '.join(p.iri for p in missing)}")
    event = req.event(stamped)
    attempts = []
    for participant in req.participants:
        try:
            create_event_remote(booking_urls[participant], event)
            attempts.append(BookingAttempt(participant, True, "created"))
        except CaldeskError as exc:
            attempts.append(BookingAttempt(participant, False, f"{type(exc).__name__}: {exc}"))
    return BookingReport(req.uid, tuple(attempts))


def book_via_inbox(req: MeetingRequest, inboxes: dict[AgentId, PodClient],
                   stamped: Instant) -> BookingReport:
    """Post the meeting as a notification to every participant's pod inbox."""
    missing = [p for p in req.participants if p not in inboxes]
    if missing:
        raise ValueError(f"no inbox client for {', '.join(p.iri for p in missing)}")
    doc = meeting_request_doc(req.event(stamped), req.organizer, NOTIFY_BASE + req.uid)
    attempts = []
    for participant in req.participants:
        try:
            nid = inboxes[participant].post_inbox(doc.encode(), "text/plain; charset=utf-8")
            attempts.append(BookingAttempt(participant, True, nid))
        except CaldeskError as exc:
            attempts.append(BookingAttempt(participant, False, f"{type(exc).__name__}: {exc}"))
    return BookingReport(req.uid, tuple(attempts))


def fetch_freebusy(client: PodClient, path: str = "/calendar/freebusy") -> FreeBusy:
    """Read a participant's free/busy projection from their pod."""
    from .linked import LinkedDoc, freebusy_from_doc

    body, _, _ = client.get(path)
    return freebusy_from_doc(LinkedDoc.from_bytes(body))
