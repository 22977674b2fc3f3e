#!/usr/bin/env python3
"""Regenerate tests/fixtures/slots.json from the scheduling engine.

The web client recomputes joint availability in the browser; these fixtures
pin its answers to the engine's on a seeded spread of windows, busy lists,
durations, and granularities. Run from frontend/: python3 tools/make_fixtures.py
(the caldesk package must be importable, e.g. installed with pip -e).
"""

import json
import random
from pathlib import Path

from caldesk.model import AgentId, FreeBusy, Instant, Interval, coalesce
from caldesk.scheduling import joint_availability

SEED = 20230501
CASES = 25
BASE = Instant.from_iso("2023-05-01T00:00:00Z")

GRANULARITIES = [300, 600, 900, 1800, 3600]


def iso_interval(iv: Interval) -> dict:
    return {"start": iv.start.iso(), "end": iv.end.iso()}


def random_busy(rng: random.Random, window: Interval, count: int) -> tuple[Interval, ...]:
    span = window.end.seconds - window.start.seconds
    raw = []
    for _ in range(count):
        start = window.start.seconds + rng.randrange(0, max(1, span - 300))
        length = rng.choice([300, 600, 900, 1800, 3600, 7200])
        end = min(start + length, window.end.seconds)
        if end > start:
            raw.append(Interval(Instant(start), Instant(end)))
    return tuple(coalesce(raw))


def build_case(rng: random.Random, index: int) -> dict:
    day = 86400
    window_start = BASE.plus(rng.randrange(0, 3 * day))
    window = Interval(window_start, window_start.plus(rng.choice([day // 2, day, 2 * day, 3 * day])))
    granularity = rng.choice(GRANULARITIES)
    duration = granularity * rng.randint(1, 4)

    participants = []
    for p in range(rng.randint(1, 5)):
        # the free/busy window must cover the query window, often strictly
        fb_window = Interval(
            Instant(window.start.seconds - rng.choice([0, 3600, day])),
            Instant(window.end.seconds + rng.choice([0, 3600, day])),
        )
        if index == 0:
            busy = ()
        elif index == 1:
            busy = (fb_window,)  # solid wall: no slots anywhere
        elif index == 2 and fb_window != window:
            # busy straddling the query window edges
            busy = tuple(coalesce([
                Interval(fb_window.start, window.start.plus(1800)),
                Interval(Instant(window.end.seconds - 1800), fb_window.end),
            ]))
        else:
            busy = random_busy(rng, fb_window, rng.randint(0, 12))
        participants.append(
            FreeBusy(AgentId(f"http://user{p}.example/profile#me"), fb_window, busy)
        )

    slots = joint_availability(participants, window, duration, granularity)
    return {
        "name": f"case-{index:02d}",
        "window": iso_interval(window),
        "durationSeconds": duration,
        "granularitySeconds": granularity,
        "participants": [
            {
                "owner": fb.owner.iri,
                "window": iso_interval(fb.window),
                "busy": [iso_interval(iv) for iv in fb.busy],
            }
            for fb in participants
        ],
        "expectedSlots": [iso_interval(slot.interval) for slot in slots],
    }


def wire_fixture() -> dict:
    """What the engine puts on the wire for documents the client also builds."""
    from caldesk.ics import serialize_event
    from caldesk.linked import meeting_request_doc
    from caldesk.model import Event, EventVersion
    from caldesk.orchestrator import InboxRoute, Mode, SyncConfig, encode_config
    from caldesk.scheduling import NOTIFY_BASE

    configs = []
    for name, config in [
        (
            "hybrid-two-sources",
            SyncConfig(
                mode=Mode.HYBRID_EXTERNAL_FIRST,
                sources=(("http://cal.example/cal/work.ics", "work"),
                         ("http://cal.example/cal/home.ics", "home")),
                freebusy_path="/calendar/freebusy",
                window_filter=Interval(
                    Instant.from_iso("2023-05-01T00:00:00Z"),
                    Instant.from_iso("2023-05-08T00:00:00Z"),
                ),
            ),
        ),
        ("solid-only", SyncConfig(mode=Mode.SOLID_ONLY, freebusy_path="/calendar/freebusy")),
        (
            "solid-first-push",
            SyncConfig(
                mode=Mode.SOLID_FIRST_HYBRID,
                sources=(("http://cal.example/cal/work.ics", "work"),),
                inbox_route=InboxRoute.SEPARATE_REMOTE_CALENDAR,
                push_url="http://cal.example/cal/frominbox",
                interval_seconds=60,
            ),
        ),
    ]:
        configs.append({
            "name": name,
            "mode": config.mode.value,
            "target": config.target_path,
            "intervalSeconds": str(config.interval_seconds),
            "freebusy": config.freebusy_path or "",
            "inboxRoute": config.inbox_route.value if config.inbox_route else "",
            "pushUrl": config.push_url or "",
            "windowStart": config.window_filter.start.iso() if config.window_filter else "",
            "windowEnd": config.window_filter.end.iso() if config.window_filter else "",
            "sources": [{"url": url, "label": label} for url, label in config.sources],
            "doc": encode_config(config).text(),
        })

    event = Event(
        uid="m-sync",
        interval=Interval(
            Instant.from_iso("2023-05-02T10:00:00Z"),
            Instant.from_iso("2023-05-02T11:00:00Z"),
        ),
        summary='Weekly "sync", part 2; \\ with edge chars,',
        version=EventVersion(sequence=0, stamped=Instant.from_iso("2023-05-01T09:00:00Z")),
    )
    organizer = "http://bob.example/profile#me"
    return {
        "configs": configs,
        "meetingRequest": {
            "uid": event.uid,
            "summary": event.summary,
            "start": event.interval.start.iso(),
            "end": event.interval.end.iso(),
            "organizer": organizer,
            "stamped": event.version.stamped.iso(),
            "doc": meeting_request_doc(event, AgentId(organizer), NOTIFY_BASE + event.uid).text(),
        },
        "vevent": {
            "uid": event.uid,
            "summary": event.summary,
            "start": event.interval.start.iso(),
            "end": event.interval.end.iso(),
            "stamped": event.version.stamped.iso(),
            "text": serialize_event(event),
        },
    }


def main() -> None:
    rng = random.Random(SEED)
    cases = [build_case(rng, index) for index in range(CASES)]
    nonempty = sum(1 for case in cases if case["expectedSlots"])
    fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    slots = fixtures / "slots.json"
    slots.write_text(json.dumps({"seed": SEED, "cases": cases}, indent=2) + "\n")
    print(f"wrote {slots} ({len(cases)} cases, {nonempty} with slots)")
    wire = fixtures / "wire.json"
    wire.write_text(json.dumps(wire_fixture(), indent=2) + "\n")
    print(f"wrote {wire}")


if __name__ == "__main__":
    main()
