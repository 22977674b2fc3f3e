"""Line-oriented statement documents and the calendar <-> document mapping.

A document is a sorted list of statements, one per line:

    <subject-iri> <predicate-iri> "object" .

Objects are quoted strings escaping only ``\\`` and ``\"``. Documents are
LF-terminated UTF-8 and byte-deterministic for equal inputs, which is what
lets the sync engine detect no-op writes by byte comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from urllib.parse import urlparse

from .errors import MalformedDoc
from .model import (
    AgentId,
    Calendar,
    Event,
    EventStatus,
    EventVersion,
    FreeBusy,
    Instant,
    Interval,
)

VOCAB = "http://caldesk.example/vocab#"

_STATEMENT = re.compile(r'^<([^<>\s]+)> <([^<>\s]+)> "((?:[^"\\]|\\.)*)" \.$')

_EVENT_PREDICATES = ("uid", "start", "end", "summary", "sequence", "stamped", "status", "origin")


def _escape(value: str) -> str:
    return value.replace("\\", "\\\\").replace('"', '\\"')


def _unescape(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        if value[i] == "\\":
            if i + 1 >= len(value) or value[i + 1] not in ('"', "\\"):
                raise MalformedDoc(f"bad escape in object: {value!r}")
            out.append(value[i + 1])
            i += 2
        else:
            out.append(value[i])
            i += 1
    return "".join(out)


def statement(subject: str, predicate: str, obj: str) -> str:
    return f'<{subject}> <{predicate}> "{_escape(obj)}" .'


def parse_statement(line: str) -> tuple[str, str, str]:
    match = _STATEMENT.match(line)
    if match is None:
        raise MalformedDoc(f"bad statement line: {line!r}")
    return match.group(1), match.group(2), _unescape(match.group(3))


@dataclass(frozen=True)
class LinkedDoc:
    """An immutable statement document; ``lines`` are sorted on construction."""

    lines: tuple[str, ...] = ()

    @classmethod
    def from_statements(cls, statements) -> "LinkedDoc":
        return cls(tuple(sorted(statements)))

    @classmethod
    def from_text(cls, text: str) -> "LinkedDoc":
        lines = [line for line in text.split("\n") if line != ""]
        for line in lines:
            parse_statement(line)  # validates grammar early
        return cls(tuple(lines))

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinkedDoc":
        try:
            return cls.from_text(data.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedDoc(f"document is not UTF-8: {exc}") from exc

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def encode(self) -> bytes:
        return self.text().encode("utf-8")

    def triples(self) -> list[tuple[str, str, str]]:
        return [parse_statement(line) for line in self.lines]


def require_base_iri(base_iri: str) -> str:
    parsed = urlparse(base_iri)
    if parsed.scheme not in ("http", "https") or not parsed.netloc or parsed.fragment:
        raise ValueError(f"base iri must be an absolute HTTP IRI without fragment: {base_iri!r}")
    return base_iri


def to_linked(cal: Calendar, base_iri: str) -> LinkedDoc:
    """Encode a calendar as a statement document rooted at ``base_iri``."""
    require_base_iri(base_iri)
    statements = [statement(base_iri, VOCAB + "owner", cal.owner.iri)]
    for event in cal.events.values():
        subject = f"{base_iri}#ev-{event.uid}"
        statements.extend(
            [
                statement(subject, VOCAB + "uid", event.uid),
                statement(subject, VOCAB + "start", event.interval.start.iso()),
                statement(subject, VOCAB + "end", event.interval.end.iso()),
                statement(subject, VOCAB + "summary", event.summary),
                statement(subject, VOCAB + "sequence", str(event.version.sequence)),
                statement(subject, VOCAB + "stamped", event.version.stamped.iso()),
                statement(subject, VOCAB + "status", event.status.value),
                statement(subject, VOCAB + "origin", event.origin),
            ]
        )
    return LinkedDoc.from_statements(statements)


def _group_triples(doc: LinkedDoc) -> dict[str, dict[str, str]]:
    """Group triples by subject, rejecting conflicting duplicates."""
    subjects: dict[str, dict[str, str]] = {}
    for subject, predicate, obj in doc.triples():
        if not predicate.startswith(VOCAB):
            raise MalformedDoc(f"unknown vocabulary: {predicate}")
        key = predicate[len(VOCAB):]
        fields = subjects.setdefault(subject, {})
        if key in fields and fields[key] != obj:
            raise MalformedDoc(f"conflicting {key} statements for {subject}")
        fields[key] = obj
    return subjects


def _parse_instant(fields: dict[str, str], key: str, subject: str) -> Instant:
    try:
        return Instant.from_iso(fields[key])
    except ValueError as exc:
        raise MalformedDoc(f"bad {key} for {subject}: {fields[key]!r}") from exc


def from_linked(doc: LinkedDoc) -> Calendar:
    """Decode a calendar document; the inverse of :func:`to_linked`.

    Statement documents carry no source rank (it is transport-local), so
    every decoded event has ``source_rank`` 0.
    """
    subjects = _group_triples(doc)
    owner_subjects = [s for s, fields in subjects.items() if "owner" in fields]
    if len(owner_subjects) != 1:
        raise MalformedDoc(f"expected exactly one owner statement, got {len(owner_subjects)}")
    base = owner_subjects[0]
    owner_fields = subjects.pop(base)
    if set(owner_fields) != {"owner"}:
        raise MalformedDoc("owner subject must carry only the owner statement")
    try:
        owner = AgentId(owner_fields["owner"])
    except ValueError as exc:
        raise MalformedDoc(str(exc)) from exc

    events: dict[str, Event] = {}
    for subject, fields in subjects.items():
        for key in _EVENT_PREDICATES:
            if key not in fields:
                raise MalformedDoc(f"{subject} missing mandatory field {key}")
        for key in fields:
            if key not in _EVENT_PREDICATES:
                raise MalformedDoc(f"unknown predicate #{key} for {subject}")
        uid = fields["uid"]
        if subject != f"{base}#ev-{uid}":
            raise MalformedDoc(f"subject {subject} does not match uid {uid!r}")
        if not fields["sequence"].isdigit():
            raise MalformedDoc(f"bad sequence for {subject}: {fields['sequence']!r}")
        try:
            status = EventStatus.parse(fields["status"])
        except ValueError as exc:
            raise MalformedDoc(str(exc)) from exc
        start = _parse_instant(fields, "start", subject)
        end = _parse_instant(fields, "end", subject)
        try:
            event = Event(
                uid=uid,
                interval=Interval(start, end),
                summary=fields["summary"],
                status=status,
                version=EventVersion(
                    sequence=int(fields["sequence"]),
                    stamped=_parse_instant(fields, "stamped", subject),
                ),
                origin=fields["origin"],
            )
        except ValueError as exc:
            raise MalformedDoc(str(exc)) from exc
        if uid in events:
            raise MalformedDoc(f"duplicate uid {uid!r}")
        events[uid] = event
    return Calendar(owner, events)


def freebusy_to_doc(fb: FreeBusy, base_iri: str) -> LinkedDoc:
    """Encode a free/busy projection; busy intervals are numbered, never named."""
    require_base_iri(base_iri)
    statements = [
        statement(base_iri, VOCAB + "owner", fb.owner.iri),
        statement(base_iri, VOCAB + "windowStart", fb.window.start.iso()),
        statement(base_iri, VOCAB + "windowEnd", fb.window.end.iso()),
    ]
    for index, interval in enumerate(fb.busy):
        subject = f"{base_iri}#busy-{index:04d}"
        statements.append(statement(subject, VOCAB + "start", interval.start.iso()))
        statements.append(statement(subject, VOCAB + "end", interval.end.iso()))
    return LinkedDoc.from_statements(statements)


def freebusy_from_doc(doc: LinkedDoc) -> FreeBusy:
    subjects = _group_triples(doc)
    base_subjects = [s for s, fields in subjects.items() if "owner" in fields]
    if len(base_subjects) != 1:
        raise MalformedDoc("expected exactly one owner statement")
    base_fields = subjects.pop(base_subjects[0])
    for key in ("windowStart", "windowEnd"):
        if key not in base_fields:
            raise MalformedDoc(f"free/busy document missing {key}")
    try:
        owner = AgentId(base_fields["owner"])
        window = Interval(
            Instant.from_iso(base_fields["windowStart"]),
            Instant.from_iso(base_fields["windowEnd"]),
        )
    except ValueError as exc:
        raise MalformedDoc(str(exc)) from exc
    busy = []
    for subject in sorted(subjects):
        fields = subjects[subject]
        if "start" not in fields or "end" not in fields:
            raise MalformedDoc(f"busy subject {subject} missing start/end")
        try:
            busy.append(Interval(Instant.from_iso(fields["start"]), Instant.from_iso(fields["end"])))
        except ValueError as exc:
            raise MalformedDoc(str(exc)) from exc
    try:
        return FreeBusy(owner, window, tuple(busy))
    except ValueError as exc:
        raise MalformedDoc(str(exc)) from exc


# --- notifications ----------------------------------------------------------

NOTIFICATION_TYPE = VOCAB + "notificationType"
MEETING_REQUEST = "MeetingRequest"
CONFLICT_DETECTED = "ConflictDetected"


def meeting_request_doc(event: Event, organizer: AgentId, base_iri: str) -> LinkedDoc:
    """Notification body: a one-event calendar fragment tagged as a meeting request."""
    fragment = to_linked(Calendar.of(organizer, [event]), base_iri)
    return LinkedDoc.from_statements(
        list(fragment.lines) + [statement(base_iri, NOTIFICATION_TYPE, MEETING_REQUEST)]
    )


def conflict_doc(owner: AgentId, pairs: list[tuple[str, str]], base_iri: str) -> LinkedDoc:
    """Notification body flagging clashing uid pairs."""
    statements = [
        statement(base_iri, NOTIFICATION_TYPE, CONFLICT_DETECTED),
        statement(base_iri, VOCAB + "owner", owner.iri),
    ]
    for index, (first, second) in enumerate(pairs):
        subject = f"{base_iri}#clash-{index:04d}"
        statements.append(statement(subject, VOCAB + "clashFirst", first))
        statements.append(statement(subject, VOCAB + "clashSecond", second))
    return LinkedDoc.from_statements(statements)


def notification_type(doc: LinkedDoc) -> str | None:
    """The #notificationType object, or None if the document carries none."""
    for subject, predicate, obj in doc.triples():
        if predicate == NOTIFICATION_TYPE:
            return obj
    return None


def strip_notification_type(doc: LinkedDoc) -> LinkedDoc:
    kept = [line for line in doc.lines if f"<{NOTIFICATION_TYPE}>" not in line]
    return LinkedDoc(tuple(kept))
