"""ICS (iCalendar) subset: VCALENDAR/VEVENT with UID, DTSTAMP, DTSTART,
DTEND, SUMMARY, SEQUENCE and STATUS, UTC datetimes only.

Output is byte-deterministic: CRLF line endings, no folding, events sorted
by uid, fixed property order. Input accepts RFC 5545 line folding.
Recurrence rules, timezone references and non-VEVENT components are
rejected rather than silently dropped.
"""

from __future__ import annotations

from .errors import MalformedIcs, UnsupportedFeature
from .model import AgentId, Calendar, Event, EventStatus, EventVersion, Instant, Interval

PRODID = "-//caldesk//calendar 0.1//EN"

# transport placeholder; ICS carries no owner, callers re-own after parsing
ANONYMOUS = AgentId("http://caldesk.example/agent/anonymous")

_STATUS_TO_ICS = {
    EventStatus.CONFIRMED: "CONFIRMED",
    EventStatus.TENTATIVE: "TENTATIVE",
    EventStatus.CONFLICT: "X-CONFLICT",
}
_STATUS_FROM_ICS = {v: k for k, v in _STATUS_TO_ICS.items()}

_UNSUPPORTED_PROPS = {"RRULE", "RDATE", "EXDATE", "EXRULE", "DURATION"}


def _escape_text(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace(";", "\\;")
        .replace(",", "\\,")
        .replace("\n", "\\n")
    )


def _unescape_text(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\":
            if i + 1 >= len(value):
                raise MalformedIcs("dangling escape in text value")
            nxt = value[i + 1]
            if nxt in ("\\", ";", ","):
                out.append(nxt)
            elif nxt in ("n", "N"):
                out.append("\n")
            else:
                raise MalformedIcs(f"unknown escape \\{nxt}")
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _unfold(text: str) -> list[str]:
    """Split into logical lines, joining folded continuations."""
    physical = text.split("\n")
    if physical and physical[-1] == "":
        physical.pop()
    lines: list[str] = []
    for raw in physical:
        line = raw.rstrip("\r")
        if line[:1] in (" ", "\t"):
            if not lines:
                raise MalformedIcs("continuation line before any property")
            lines[-1] += line[1:]
        else:
            lines.append(line)
    return lines


def _split_property(line: str) -> tuple[str, str, str]:
    """Return (name, params, value) for a content line."""
    head, sep, value = line.partition(":")
    if not sep:
        raise MalformedIcs(f"property line without colon: {line!r}")
    name, psep, params = head.partition(";")
    return name.upper(), params if psep else "", value


def _parse_datetime(name: str, value: str) -> Instant:
    if not value.endswith("Z"):
        if len(value) == 8 and value.isdigit():
            raise UnsupportedFeature(f"{name}: all-day DATE values are not supported")
        raise MalformedIcs(f"{name}: datetime must be UTC with Z suffix: {value!r}")
    try:
        return Instant.from_ics(value)
    except ValueError as exc:
        raise MalformedIcs(f"{name}: bad datetime {value!r}") from exc


def parse_ics(text: str, *, owner: AgentId = ANONYMOUS, origin: str = "") -> Calendar:
    """Parse ICS text into a calendar owned by ``owner``.

    Missing SEQUENCE defaults to 0, missing DTSTAMP to the epoch and
    missing STATUS to Confirmed.
    """
    lines = _unfold(text)
    if not lines or lines[0] != "BEGIN:VCALENDAR":
        raise MalformedIcs("missing BEGIN:VCALENDAR")
    events: dict[str, Event] = {}
    in_event = False
    props: dict[str, str] = {}
    terminated = False
    for line in lines[1:]:
        if line == "END:VCALENDAR":
            if in_event:
                raise MalformedIcs("unterminated VEVENT")
            terminated = True
            continue
        if terminated:
            raise MalformedIcs("content after END:VCALENDAR")
        if line == "BEGIN:VEVENT":
            if in_event:
                raise UnsupportedFeature("nested components inside VEVENT")
            in_event = True
            props = {}
            continue
        if line == "END:VEVENT":
            if not in_event:
                raise MalformedIcs("END:VEVENT without BEGIN:VEVENT")
            event = _build_event(props, origin)
            if event.uid in events:
                raise MalformedIcs(f"duplicate UID {event.uid!r}")
            events[event.uid] = event
            in_event = False
            continue
        if line.startswith("BEGIN:"):
            raise UnsupportedFeature(f"unsupported component {line[6:]!r}")
        if line.startswith("END:"):
            raise MalformedIcs(f"unexpected {line!r}")
        if not line:
            raise MalformedIcs("blank line inside calendar")
        name, params, value = _split_property(line)
        if name in _UNSUPPORTED_PROPS:
            raise UnsupportedFeature(f"{name} is not supported")
        if "TZID" in params.upper():
            raise UnsupportedFeature("TZID parameters are not supported")
        if in_event:
            if name in props:
                raise MalformedIcs(f"repeated property {name}")
            props[name] = value
        # calendar-level properties (VERSION, PRODID, ...) are ignored
    if not terminated:
        raise MalformedIcs("missing END:VCALENDAR")
    return Calendar(owner, events)


def _build_event(props: dict[str, str], origin: str) -> Event:
    for required in ("UID", "DTSTART", "DTEND"):
        if required not in props:
            raise MalformedIcs(f"VEVENT missing {required}")
    start = _parse_datetime("DTSTART", props["DTSTART"])
    end = _parse_datetime("DTEND", props["DTEND"])
    try:
        interval = Interval(start, end)
    except ValueError as exc:
        raise MalformedIcs(str(exc)) from exc
    sequence = 0
    if "SEQUENCE" in props:
        if not props["SEQUENCE"].isdigit():
            raise MalformedIcs(f"bad SEQUENCE {props['SEQUENCE']!r}")
        sequence = int(props["SEQUENCE"])
    stamped = _parse_datetime("DTSTAMP", props["DTSTAMP"]) if "DTSTAMP" in props else Instant(0)
    status = EventStatus.CONFIRMED
    if "STATUS" in props:
        if props["STATUS"] not in _STATUS_FROM_ICS:
            raise MalformedIcs(f"unknown STATUS {props['STATUS']!r}")
        status = _STATUS_FROM_ICS[props["STATUS"]]
    try:
        return Event(
            uid=props["UID"],
            interval=interval,
            summary=_unescape_text(props.get("SUMMARY", "")),
            status=status,
            version=EventVersion(sequence=sequence, stamped=stamped),
            origin=origin,
        )
    except ValueError as exc:
        raise MalformedIcs(str(exc)) from exc


def serialize_event(event: Event) -> str:
    """One VEVENT block with the fixed property order, CRLF-terminated."""
    lines = [
        "BEGIN:VEVENT",
        f"UID:{event.uid}",
        f"DTSTAMP:{event.version.stamped.ics()}",
        f"DTSTART:{event.interval.start.ics()}",
        f"DTEND:{event.interval.end.ics()}",
        f"SUMMARY:{_escape_text(event.summary)}",
        f"SEQUENCE:{event.version.sequence}",
        f"STATUS:{_STATUS_TO_ICS[event.status]}",
        "END:VEVENT",
    ]
    return "\r\n".join(lines) + "\r\n"


def serialize_ics(cal: Calendar) -> str:
    """Deterministic ICS text: header, events sorted by uid, CRLF endings."""
    out = [
        "BEGIN:VCALENDAR",
        "VERSION:2.0",
        f"PRODID:{PRODID}",
    ]
    text = "\r\n".join(out) + "\r\n"
    for event in cal.sorted_events():
        text += serialize_event(event)
    return text + "END:VCALENDAR\r\n"


def parse_vevent_fragment(text: str, *, origin: str = "") -> Event:
    """Parse a single VEVENT, with or without its VCALENDAR wrapper."""
    stripped = text.strip()
    if not stripped.startswith("BEGIN:VCALENDAR"):
        text = "BEGIN:VCALENDAR\r\n" + text
        if not text.endswith("\n"):
            text += "\r\n"
        text += "END:VCALENDAR\r\n"
    cal = parse_ics(text, origin=origin)
    if len(cal) != 1:
        raise MalformedIcs(f"expected exactly one VEVENT, got {len(cal)}")
    return cal.sorted_events()[0]
