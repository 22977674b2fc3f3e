"""Shared test utilities: random calendar generators and the independent
minute-resolution bitmap oracle used to cross-check interval algebra.

The oracle deliberately avoids the library's interval code: it rasterizes
intervals onto a numpy boolean array, one cell per minute.
"""

from __future__ import annotations

import random
import string

import numpy as np

from caldesk.model import (
    AgentId,
    Calendar,
    Event,
    EventStatus,
    EventVersion,
    Instant,
    Interval,
)

MINUTE = 60
HOUR = 3600
DAY = 86400

BASE = Instant.from_iso("2023-05-01T00:00:00Z")

ALICE = AgentId("http://alice.example/profile#me")
BOB = AgentId("http://bob.example/profile#me")
CAROL = AgentId("http://carol.example/profile#me")


def at(hours: float, base: Instant = BASE) -> Instant:
    return base.plus(int(hours * HOUR))


def span(start_h: float, end_h: float, base: Instant = BASE) -> Interval:
    return Interval(at(start_h, base), at(end_h, base))


def bitmap(intervals, window: Interval) -> np.ndarray:
    """Rasterize intervals onto a per-minute boolean grid over ``window``.

    Inputs must be minute-aligned; the grid covers [window.start, window.end).
    """
    total = (window.end.seconds - window.start.seconds) // MINUTE
    grid = np.zeros(total, dtype=bool)
    for interval in intervals:
        lo = max(interval.start.seconds, window.start.seconds)
        hi = min(interval.end.seconds, window.end.seconds)
        if lo >= hi:
            continue
        assert lo % MINUTE == 0 and hi % MINUTE == 0, "oracle needs minute-aligned input"
        grid[(lo - window.start.seconds) // MINUTE:(hi - window.start.seconds) // MINUTE] = True
    return grid


def oracle_free_starts(busy_grids, window: Interval, duration: int, granularity: int) -> list[Instant]:
    """Brute-force slot starts: grid walk over the union bitmap of all participants."""
    union = np.zeros((window.end.seconds - window.start.seconds) // MINUTE, dtype=bool)
    for grid in busy_grids:
        union |= grid
    starts = []
    offset = 0
    while window.start.seconds + offset + duration <= window.end.seconds:
        lo = offset // MINUTE
        hi = (offset + duration) // MINUTE
        if not union[lo:hi].any():
            starts.append(window.start.plus(offset))
        offset += granularity
    return starts


def random_interval(rng: random.Random, window: Interval, *, max_minutes: int = 180) -> Interval:
    total = (window.end.seconds - window.start.seconds) // MINUTE
    length = rng.randint(1, min(max_minutes, total))
    start = rng.randint(0, total - length)
    return Interval(
        window.start.plus(start * MINUTE),
        window.start.plus((start + length) * MINUTE),
    )


def random_summary(rng: random.Random) -> str:
    alphabet = string.ascii_letters + string.digits + ' .,;:"\\/#<>-'
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 24)))


def random_event(
    rng: random.Random,
    uid: str,
    window: Interval,
    *,
    canonical: bool = False,
) -> Event:
    """A random event; ``canonical`` zeroes transport-local fields the way
    stored pod documents have them."""
    return Event(
        uid=uid,
        interval=random_interval(rng, window),
        summary=random_summary(rng),
        status=rng.choice(list(EventStatus)),
        version=EventVersion(
            sequence=rng.randint(0, 5),
            stamped=BASE.plus(rng.randint(0, 10) * MINUTE),
            source_rank=0 if canonical else rng.randint(0, 3),
        ),
        origin="" if canonical else rng.choice(["", "work", "home"]),
    )


def random_calendar(
    rng: random.Random,
    owner: AgentId = ALICE,
    *,
    n_events: int | None = None,
    max_events: int = 12,
    window: Interval | None = None,
    uid_pool: list[str] | None = None,
    canonical: bool = False,
) -> Calendar:
    window = window or Interval(BASE, BASE.plus(14 * DAY))
    if n_events is None:
        n_events = rng.randint(0, max_events)
    if uid_pool is None:
        uids = [f"ev{idx}-{rng.randrange(10**6)}" for idx in range(n_events)]
    else:
        uids = rng.sample(uid_pool, min(n_events, len(uid_pool)))
    return Calendar.of(owner, [random_event(rng, uid, window, canonical=canonical) for uid in uids])


# --- server rigs --------------------------------------------------------------


class PodRig:
    """A pod server plus its owner-authenticated client, for integration tests."""

    def __init__(self, owner: AgentId, secret: str = "test-secret", *, root=None, clock=None):
        from caldesk.httpbase import Clock
        from caldesk.podstore import PodClient, PodStore, serve_pod

        self.owner = owner
        self.secret = secret
        self.store = PodStore(owner, secret, root=root, clock=clock or Clock())
        self.server = serve_pod(self.store)
        self.base_url = self.server.base_url
        self.admin = PodClient(self.base_url, owner_secret=secret)

    def grant_orchestrator(self, agent=None) -> None:
        """The standard grants a user hands the orchestrator: read config,
        read/write the calendar subtree, and full use of the inbox."""
        from caldesk.orchestrator import ORCHESTRATOR_AGENT
        from caldesk.podstore import AccessMode, AclEntry

        agent = agent or ORCHESTRATOR_AGENT
        read = frozenset({AccessMode.READ})
        self.admin.put_acl(
            self.admin.get_acl()
            + [
                AclEntry("/settings/orchestrator", agent.iri, read),
                AclEntry("/calendar", agent.iri,
                         frozenset({AccessMode.READ, AccessMode.WRITE})),
                AclEntry("/inbox/", agent.iri,
                         frozenset({AccessMode.READ, AccessMode.WRITE, AccessMode.APPEND})),
            ]
        )

    def write_config(self, config) -> None:
        from caldesk.orchestrator import encode_config

        self.admin.put("/settings/orchestrator", encode_config(config).encode(),
                       "text/plain; charset=utf-8")

    def stop(self) -> None:
        self.server.stop()
