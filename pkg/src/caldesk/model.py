"""Calendar data model: instants, intervals, events, deterministic merge,
interval coalescing, and the privacy-preserving free/busy projection.

All values here are immutable after construction and every operation is a
pure function, so they are safe to share between threads.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from types import MappingProxyType
from typing import Iterable, Mapping
from urllib.parse import urlparse

from .errors import OwnerMismatch

_ISO_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
_ICS_FORMAT = "%Y%m%dT%H%M%SZ"

# uid must be usable as a single token in line-oriented formats
_UID_BAD = re.compile(r"[\s\x00-\x1f\x7f]")
# summaries may hold any printable text but no control characters, which
# would break the one-statement-per-line document grammar
_CONTROL = re.compile(r"[\x00-\x1f\x7f]")

MAX_SUMMARY_LEN = 1024


@dataclass(frozen=True, order=True)
class Instant:
    """A UTC point in time with second precision (seconds since epoch)."""

    seconds: int

    def __post_init__(self):
        if not isinstance(self.seconds, int) or self.seconds < 0:
            raise ValueError(f"instant must be a non-negative integer: {self.seconds!r}")

    def iso(self) -> str:
        """Serialize as ISO 8601 UTC, e.g. ``2023-05-01T10:00:00Z``."""
        return datetime.fromtimestamp(self.seconds, tz=timezone.utc).strftime(_ISO_FORMAT)

    def ics(self) -> str:
        """Serialize in the compact ICS form, e.g. ``20230501T100000Z``."""
        return datetime.fromtimestamp(self.seconds, tz=timezone.utc).strftime(_ICS_FORMAT)

    @classmethod
    def from_iso(cls, text: str) -> "Instant":
        return cls._parse(text, _ISO_FORMAT)

    @classmethod
    def from_ics(cls, text: str) -> "Instant":
        return cls._parse(text, _ICS_FORMAT)

    @classmethod
    def _parse(cls, text: str, fmt: str) -> "Instant":
        dt = datetime.strptime(text, fmt).replace(tzinfo=timezone.utc)
        return cls(int(dt.timestamp()))

    def plus(self, seconds: int) -> "Instant":
        return Instant(self.seconds + seconds)

    def __str__(self) -> str:
        return self.iso()


EPOCH = Instant(0)


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time interval ``[start, end)``; zero length is invalid."""

    start: Instant
    end: Instant

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"interval start must precede end: {self.start} >= {self.end}")

    def duration(self) -> int:
        return self.end.seconds - self.start.seconds

    def overlaps(self, other: "Interval") -> bool:
        """True iff the intervals share at least one instant (touching is not overlap)."""
        return self.start < other.end and other.start < self.end

    def intersect(self, other: "Interval") -> "Interval | None":
        if not self.overlaps(other):
            return None
        return Interval(max(self.start, other.start), min(self.end, other.end))

    def contains(self, other: "Interval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def __str__(self) -> str:
        return f"{self.start.iso()}/{self.end.iso()}"


@dataclass(frozen=True, order=True)
class AgentId:
    """WebID-like agent identifier: an absolute HTTP(S) IRI."""

    iri: str

    def __post_init__(self):
        parsed = urlparse(self.iri)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"agent id must be an absolute HTTP IRI: {self.iri!r}")

    def __str__(self) -> str:
        return self.iri


class EventStatus(enum.Enum):
    CONFIRMED = "Confirmed"
    TENTATIVE = "Tentative"
    CONFLICT = "Conflict"

    @classmethod
    def parse(cls, text: str) -> "EventStatus":
        for status in cls:
            if status.value == text:
                return status
        raise ValueError(f"unknown event status: {text!r}")


@dataclass(frozen=True, order=True)
class EventVersion:
    """Version metadata ordered lexicographically by (sequence, stamped, source_rank).

    ``source_rank`` is the index of the contributing source in the user's
    sync configuration; a higher rank wins ties between equally fresh copies.
    """

    sequence: int = 0
    stamped: Instant = EPOCH
    source_rank: int = 0

    def __post_init__(self):
        if self.sequence < 0 or self.source_rank < 0:
            raise ValueError("sequence and source_rank must be non-negative")


@dataclass(frozen=True)
class Event:
    """A single calendar entry, identified by uid within a calendar."""

    uid: str
    interval: Interval
    summary: str
    status: EventStatus = EventStatus.CONFIRMED
    version: EventVersion = EventVersion()
    origin: str = ""

    def __post_init__(self):
        if not self.uid or _UID_BAD.search(self.uid):
            raise ValueError(f"uid must be non-empty without whitespace/control chars: {self.uid!r}")
        if len(self.summary) > MAX_SUMMARY_LEN:
            raise ValueError(f"summary longer than {MAX_SUMMARY_LEN} characters")
        if _CONTROL.search(self.summary):
            raise ValueError("summary must not contain control characters")

    def order_key(self):
        """Total order used by merge: version first, then content as tie-break."""
        return (
            self.version.sequence,
            self.version.stamped,
            self.version.source_rank,
            self.interval,
            self.summary,
            self.status.value,
            self.origin,
        )


@dataclass(frozen=True)
class Calendar:
    """Immutable set of events keyed by uid, belonging to one agent."""

    owner: AgentId
    events: Mapping[str, Event] = field(default_factory=dict)

    def __post_init__(self):
        for uid, event in self.events.items():
            if uid != event.uid:
                raise ValueError(f"calendar key {uid!r} does not match event uid {event.uid!r}")
        object.__setattr__(self, "events", MappingProxyType(dict(self.events)))

    @classmethod
    def of(cls, owner: AgentId, events: Iterable[Event] = ()) -> "Calendar":
        return cls(owner, {event.uid: event for event in events})

    def with_owner(self, owner: AgentId) -> "Calendar":
        return Calendar(owner, dict(self.events))

    def with_events(self, events: Iterable[Event]) -> "Calendar":
        return Calendar.of(self.owner, events)

    def sorted_events(self) -> list[Event]:
        return [self.events[uid] for uid in sorted(self.events)]

    def __len__(self) -> int:
        return len(self.events)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Calendar):
            return NotImplemented
        return self.owner == other.owner and dict(self.events) == dict(other.events)


@dataclass(frozen=True)
class FreeBusy:
    """Busy intervals of one agent inside a window; carries no event detail."""

    owner: AgentId
    window: Interval
    busy: tuple[Interval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "busy", tuple(self.busy))
        previous = None
        for interval in self.busy:
            if not self.window.contains(interval):
                raise ValueError(f"busy interval {interval} outside window {self.window}")
            if previous is not None and previous.end >= interval.start:
                raise ValueError("busy intervals must be sorted, disjoint and coalesced")
            previous = interval


@dataclass(frozen=True)
class ChangeSet:
    """Uids added or replaced by a merge, each list sorted."""

    added: tuple[str, ...] = ()
    updated: tuple[str, ...] = ()

    def is_empty(self) -> bool:
        return not self.added and not self.updated


def merge(base: Calendar, incoming: Calendar) -> tuple[Calendar, ChangeSet]:
    """Combine two calendars of the same owner, keeping the maximal event per uid.

    The per-uid maximum is taken under the total order of ``Event.order_key``
    (version, then content), which makes merge idempotent, commutative and
    associative.
    """
    if base.owner != incoming.owner:
        raise OwnerMismatch(f"{base.owner} != {incoming.owner}")
    merged = dict(base.events)
    added: list[str] = []
    updated: list[str] = []
    for uid, event in incoming.events.items():
        current = merged.get(uid)
        if current is None:
            merged[uid] = event
            added.append(uid)
        else:
            winner = max(current, event, key=Event.order_key)
            if winner != current:
                merged[uid] = winner
                updated.append(uid)
    return Calendar(base.owner, merged), ChangeSet(tuple(sorted(added)), tuple(sorted(updated)))


def coalesce(intervals: Iterable[Interval]) -> list[Interval]:
    """Union of intervals as a sorted, disjoint, non-adjacent list."""
    pending = sorted(intervals)
    result: list[Interval] = []
    for interval in pending:
        if result and interval.start <= result[-1].end:
            if interval.end > result[-1].end:
                result[-1] = Interval(result[-1].start, interval.end)
        else:
            result.append(interval)
    return result


def project_freebusy(cal: Calendar, window: Interval) -> FreeBusy:
    """Project a calendar onto busy intervals clipped to ``window``.

    Every event counts as busy regardless of status: tentative and
    conflicted entries still block the slot, which keeps availability
    conservative.
    """
    clipped = []
    for event in cal.events.values():
        piece = event.interval.intersect(window)
        if piece is not None:
            clipped.append(piece)
    return FreeBusy(cal.owner, window, tuple(coalesce(clipped)))


def clip_calendar(cal: Calendar, window: Interval) -> Calendar:
    """Drop events that do not overlap ``window`` (events are kept whole)."""
    return cal.with_events(e for e in cal.events.values() if e.interval.overlaps(window))


def reversion(event: Event, *, source_rank: int | None = None, origin: str | None = None) -> Event:
    """Copy an event with transport-local fields (rank, origin) replaced."""
    version = event.version
    if source_rank is not None and source_rank != version.source_rank:
        version = replace(version, source_rank=source_rank)
    return replace(
        event,
        version=version,
        origin=event.origin if origin is None else origin,
    )
