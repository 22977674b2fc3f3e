"""The long-living sync service.

It registers users, reads each user's sync configuration from their own
pod, and on every tick pulls external calendars and inbox notifications
into the pod. Locally it keeps nothing but identity, pod location, token,
and status bookkeeping: calendar content never touches its storage.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import quote, unquote

from .errors import (
    AlreadyRegistered,
    CaldeskError,
    ConfigInvalid,
    ConfigMissing,
    CorruptState,
    Forbidden,
    GrantRejected,
    MalformedDoc,
    MalformedIcs,
    NotFound,
    NotRegistered,
    PodUnreachable,
    PreconditionFailed,
    StaleSequence,
    Unauthorized,
    Unreachable,
    UnsupportedFeature,
)
from .extcal import create_event_remote, fetch_ics
from .httpbase import BaseHandler, Clock, RunningServer, start_server
from .ics import parse_ics, serialize_ics
from .linked import (
    MEETING_REQUEST,
    VOCAB,
    LinkedDoc,
    conflict_doc,
    freebusy_to_doc,
    from_linked,
    notification_type,
    statement,
    strip_notification_type,
    to_linked,
)
from .model import (
    AgentId,
    Calendar,
    EPOCH,
    Event,
    EventStatus,
    Instant,
    Interval,
    clip_calendar,
    merge,
    project_freebusy,
    reversion,
)
from .podstore import SETTINGS_PATH, PodClient, normalize_path, write_atomic
from .scheduling import detect_clashes

ORCHESTRATOR_AGENT = AgentId("http://caldesk.example/agent/orchestrator")
USER_AGENT = "caldesk-orchestrator/0.1"
CONFIG_BASE = "http://caldesk.example/config"
CONFLICT_NOTIFY_BASE = "http://caldesk.example/notify/conflict"

FROMINBOX_RESOURCE = "/calendar/frominbox"
FROMINBOX_ICS = "/calendar/frominbox.ics"
FROMINBOX_LABEL = "frominbox"

DEFAULT_TARGET = "/calendar/combined"
DEFAULT_INTERVAL = 300


class Mode(enum.Enum):
    HYBRID_EXTERNAL_FIRST = "HybridExternalFirst"
    SOLID_ONLY = "SolidOnly"
    SOLID_FIRST_HYBRID = "SolidFirstHybrid"


class InboxRoute(enum.Enum):
    SEPARATE_RESOURCE = "SeparateResource"
    ICS_IN_POD = "IcsInPod"
    SEPARATE_REMOTE_CALENDAR = "SeparateRemoteCalendar"


class RegStatus(enum.Enum):
    OK = "Ok"
    PERMISSION_DENIED = "PermissionDenied"
    SOURCE_UNREACHABLE = "SourceUnreachable"
    CONFIG_MISSING = "ConfigMissing"
    NEVER = "Never"


@dataclass
class Registration:
    """What the orchestrator is allowed to remember about a user."""

    user: AgentId
    pod_base_url: str
    token: str
    created: Instant
    last_sync: Instant | None = None
    last_status: RegStatus = RegStatus.NEVER

    def line(self) -> str:
        return (
            f"{self.user.iri} {self.pod_base_url} {self.token} "
            f"{self.created.iso()} {self.last_status.value}"
        )

    @classmethod
    def from_line(cls, line: str) -> "Registration":
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"expected 5 fields, got {len(parts)}")
        status = next((s for s in RegStatus if s.value == parts[4]), None)
        if status is None:
            raise ValueError(f"unknown status {parts[4]!r}")
        return cls(
            user=AgentId(parts[0]),
            pod_base_url=parts[1],
            token=parts[2],
            created=Instant.from_iso(parts[3]),
            last_status=status,
        )


@dataclass(frozen=True)
class SyncConfig:
    mode: Mode
    sources: tuple[tuple[str, str], ...] = ()
    target_path: str = DEFAULT_TARGET
    freebusy_path: str | None = None
    inbox_route: InboxRoute | None = None
    push_url: str | None = None
    window_filter: Interval | None = None
    interval_seconds: int = DEFAULT_INTERVAL


def encode_config(config: SyncConfig, base_iri: str = CONFIG_BASE) -> LinkedDoc:
    statements = [
        statement(base_iri, VOCAB + "mode", config.mode.value),
        statement(base_iri, VOCAB + "target", config.target_path),
        statement(base_iri, VOCAB + "interval", str(config.interval_seconds)),
    ]
    if config.freebusy_path is not None:
        statements.append(statement(base_iri, VOCAB + "freebusy", config.freebusy_path))
    if config.inbox_route is not None:
        statements.append(statement(base_iri, VOCAB + "inboxRoute", config.inbox_route.value))
    if config.push_url is not None:
        statements.append(statement(base_iri, VOCAB + "pushUrl", config.push_url))
    if config.window_filter is not None:
        statements.append(
            statement(base_iri, VOCAB + "windowStart", config.window_filter.start.iso())
        )
        statements.append(
            statement(base_iri, VOCAB + "windowEnd", config.window_filter.end.iso())
        )
    for index, (url, label) in enumerate(config.sources):
        subject = f"{base_iri}#src-{index:04d}"
        statements.append(statement(subject, VOCAB + "source", url))
        statements.append(statement(subject, VOCAB + "sourceLabel", label))
        statements.append(statement(subject, VOCAB + "sourceIndex", str(index)))
    return LinkedDoc.from_statements(statements)


def validate_config(doc: LinkedDoc) -> SyncConfig:
    """Parse a config document, enumerating every violated rule at once."""
    problems: list[str] = []
    scalars: dict[str, str] = {}
    source_subjects: dict[str, dict[str, str]] = {}
    scalar_keys = {
        "mode", "target", "freebusy", "inboxRoute", "pushUrl",
        "windowStart", "windowEnd", "interval",
    }
    for subject, predicate, obj in doc.triples():
        if not predicate.startswith(VOCAB):
            problems.append(f"unknown vocabulary: {predicate}")
            continue
        key = predicate[len(VOCAB):]
        if key in scalar_keys:
            if key in scalars and scalars[key] != obj:
                problems.append(f"conflicting #{key} statements")
            scalars[key] = obj
        elif key in ("source", "sourceLabel", "sourceIndex"):
            source_subjects.setdefault(subject, {})[key] = obj
        else:
            problems.append(f"unknown setting #{key}")

    mode = None
    if "mode" not in scalars:
        problems.append("missing #mode")
    else:
        mode = next((m for m in Mode if m.value == scalars["mode"]), None)
        if mode is None:
            problems.append(f"unknown #mode {scalars['mode']!r}")

    sources: list[tuple[int, str, str]] = []
    for subject, fields in sorted(source_subjects.items()):
        if "source" not in fields:
            problems.append(f"{subject} has source metadata but no #source url")
            continue
        if "sourceIndex" not in fields:
            problems.append(f"{subject} is missing #sourceIndex")
            continue
        try:
            index = int(fields["sourceIndex"])
        except ValueError:
            problems.append(f"{subject} has non-integer #sourceIndex")
            continue
        sources.append((index, fields["source"], fields.get("sourceLabel", f"source{index}")))
    sources.sort()
    indexes = [i for i, _, _ in sources]
    if len(set(indexes)) != len(indexes):
        problems.append("duplicate #sourceIndex values")

    target = scalars.get("target", DEFAULT_TARGET)
    freebusy = scalars.get("freebusy")
    for name, value in (("target", target), ("freebusy", freebusy)):
        if value is None:
            continue
        try:
            normalize_path(value)
        except ValueError as exc:
            problems.append(f"bad #{name} path: {exc}")
        else:
            if value.startswith("/inbox"):
                problems.append(f"#{name} must not point into the inbox")

    route = None
    if "inboxRoute" in scalars:
        route = next((r for r in InboxRoute if r.value == scalars["inboxRoute"]), None)
        if route is None:
            problems.append(f"unknown #inboxRoute {scalars['inboxRoute']!r}")

    push_url = scalars.get("pushUrl")
    if push_url is not None and not push_url.startswith(("http://", "https://")):
        problems.append(f"bad #pushUrl {push_url!r}")

    window = None
    if ("windowStart" in scalars) != ("windowEnd" in scalars):
        problems.append("#windowStart and #windowEnd must appear together")
    elif "windowStart" in scalars:
        try:
            window = Interval(
                Instant.from_iso(scalars["windowStart"]),
                Instant.from_iso(scalars["windowEnd"]),
            )
        except ValueError as exc:
            problems.append(f"bad window: {exc}")

    interval_seconds = DEFAULT_INTERVAL
    if "interval" in scalars:
        try:
            interval_seconds = int(scalars["interval"])
        except ValueError:
            problems.append(f"non-integer #interval {scalars['interval']!r}")
        else:
            if interval_seconds <= 0:
                problems.append("#interval must be positive")

    if mode is Mode.HYBRID_EXTERNAL_FIRST and not sources:
        problems.append("HybridExternalFirst needs at least one #source")
    if mode is Mode.SOLID_FIRST_HYBRID and route is None and "inboxRoute" not in scalars:
        problems.append("SolidFirstHybrid needs an #inboxRoute")
    if route is InboxRoute.SEPARATE_REMOTE_CALENDAR and push_url is None:
        problems.append("inboxRoute SeparateRemoteCalendar needs a #pushUrl")

    if problems:
        raise ConfigInvalid(problems)
    return SyncConfig(
        mode=mode,
        sources=tuple((url, label) for _, url, label in sources),
        target_path=target,
        freebusy_path=freebusy,
        inbox_route=route,
        push_url=push_url,
        window_filter=window,
        interval_seconds=interval_seconds,
    )


@dataclass(frozen=True)
class SyncReport:
    user: AgentId
    started: Instant
    finished: Instant
    status: RegStatus
    per_source: tuple[tuple[str, str], ...] = ()
    wrote_target: bool = False
    conflicts_flagged: tuple[tuple[str, str], ...] = ()
    notifications_consumed: int = 0
    detail: str = ""

    def text(self) -> str:
        lines = [
            f"user {self.user.iri}",
            f"status {self.status.value}",
            f"started {self.started.iso()}",
            f"finished {self.finished.iso()}",
            f"wrote_target {'true' if self.wrote_target else 'false'}",
            f"consumed {self.notifications_consumed}",
        ]
        lines.extend(f"source {label} {state}" for label, state in self.per_source)
        lines.extend(f"conflict {a} {b}" for a, b in self.conflicts_flagged)
        if self.detail:
            lines.append(f"detail {self.detail}")
        return "".join(line + "\n" for line in lines)


class Orchestrator:
    def __init__(self, *, storage_path: Path | str | None = None,
                 clock: Clock | None = None, agent: AgentId = ORCHESTRATOR_AGENT,
                 default_interval: int = DEFAULT_INTERVAL, timeout: float = 10.0):
        self.agent = agent
        self.clock = clock or Clock()
        self.default_interval = default_interval
        self.timeout = timeout
        self.storage_path = Path(storage_path) if storage_path is not None else None
        self._lock = threading.RLock()
        self._registrations: dict[AgentId, Registration] = {}
        self._user_locks: dict[AgentId, threading.Lock] = {}
        # last-known-good source bodies, in memory only: (user-iri, url) -> (etag, Calendar)
        self._source_cache: dict[tuple[str, str], tuple[str, Calendar]] = {}
        self._intervals: dict[AgentId, int] = {}
        self.last_reports: dict[AgentId, SyncReport] = {}
        self.report_log: list[SyncReport] = []
        if self.storage_path is not None and self.storage_path.exists():
            self._load_storage()

    # --- registration lifecycle -------------------------------------------

    def register(self, user: AgentId, pod_base_url: str, *,
                 owner_secret: str | None = None, token: str | None = None) -> Registration:
        """Obtain (or accept) a pod token for this user and remember it.

        Verification reads the config path; registration never writes to
        the pod.
        """
        with self._lock:
            if user in self._registrations:
                raise AlreadyRegistered(user.iri)
        pod_base_url = pod_base_url.rstrip("/")
        if token is None:
            if owner_secret is None:
                raise ValueError("need owner_secret or a pre-issued token")
            admin = PodClient(pod_base_url, owner_secret=owner_secret,
                              timeout=self.timeout, user_agent=USER_AGENT)
            try:
                token = admin.issue_token(self.agent)
            except Unauthorized as exc:
                raise GrantRejected(str(exc)) from exc
            except Unreachable as exc:
                raise PodUnreachable(str(exc)) from exc
        probe = PodClient(pod_base_url, token=token,
                          timeout=self.timeout, user_agent=USER_AGENT)
        try:
            probe.get(SETTINGS_PATH)
        except Unauthorized as exc:
            raise GrantRejected(str(exc)) from exc
        except (Forbidden, NotFound):
            pass  # token works; config access can come later
        except Unreachable as exc:
            raise PodUnreachable(str(exc)) from exc
        registration = Registration(
            user=user,
            pod_base_url=pod_base_url,
            token=token,
            created=self.clock.now(),
        )
        with self._lock:
            if user in self._registrations:
                raise AlreadyRegistered(user.iri)
            self._registrations[user] = registration
            self._save_storage()
        return registration

    def deregister(self, user: AgentId) -> None:
        with self._lock:
            if user not in self._registrations:
                raise NotRegistered(user.iri)
            del self._registrations[user]
            self._intervals.pop(user, None)
            self._save_storage()

    def registrations(self) -> list[Registration]:
        with self._lock:
            return list(self._registrations.values())

    # --- sync ----------------------------------------------------------------

    def sync_user(self, user: AgentId) -> SyncReport:
        with self._lock:
            registration = self._registrations.get(user)
        if registration is None:
            raise NotRegistered(user.iri)
        with self._user_lock(user):
            return self._sync_locked(registration)

    def tick(self, wait: bool = False) -> list[AgentId]:
        """Sync every registration whose interval has elapsed.

        A user whose previous sync is still running is skipped, never
        queued; one user's failure cannot block another's sync.
        """
        now = self.clock.now()
        started: list[AgentId] = []
        threads: list[threading.Thread] = []
        with self._lock:
            items = list(self._registrations.items())
        for user, registration in items:
            interval = self._intervals.get(user, self.default_interval)
            if (
                registration.last_sync is not None
                and now.seconds - registration.last_sync.seconds < interval
            ):
                continue
            lock = self._user_lock(user)
            if not lock.acquire(blocking=False):
                continue

            def run(registration=registration, lock=lock):
                try:
                    self._sync_locked(registration)
                finally:
                    lock.release()

            thread = threading.Thread(target=run, daemon=True)
            thread.start()
            threads.append(thread)
            started.append(user)
        if wait:
            for thread in threads:
                thread.join()
        return started

    def run_loop(self, tick_source: Iterable[object]) -> None:
        """Drive ticks from any iterable; exhaustion stops the loop."""
        for _ in tick_source:
            self.tick(wait=True)

    def _user_lock(self, user: AgentId) -> threading.Lock:
        with self._lock:
            return self._user_locks.setdefault(user, threading.Lock())

    def _sync_locked(self, registration: Registration) -> SyncReport:
        started = self.clock.now()
        pod = PodClient(registration.pod_base_url, token=registration.token,
                        timeout=self.timeout, user_agent=USER_AGENT)
        per_source: list[tuple[str, str]] = []
        wrote = False
        conflicts: list[tuple[str, str]] = []
        consumed = 0
        detail = ""
        try:
            config = self._load_config(pod)
            with self._lock:
                self._intervals[registration.user] = config.interval_seconds
            if config.mode is Mode.SOLID_ONLY:
                wrote, consumed = self._sync_solid_only(registration, pod, config)
            elif config.mode is Mode.HYBRID_EXTERNAL_FIRST:
                wrote, conflicts, per_source = self._sync_hybrid(registration, pod, config, [])
            else:
                batch = self._collect_inbox(pod)
                self._route_outward(registration, pod, config, [e for _, e in batch])
                for nid in dict.fromkeys(nid for nid, _ in batch):
                    pod.mark_processed(nid)
                consumed = len(dict.fromkeys(nid for nid, _ in batch))
                aux = self._aux_source(registration, pod, config)
                wrote, conflicts, per_source = self._sync_hybrid(
                    registration, pod, config, [aux]
                )
            status = RegStatus.OK
        except Unauthorized as exc:
            status = RegStatus.PERMISSION_DENIED
            detail = str(exc)
        except Forbidden as exc:
            if registration.last_status in (RegStatus.NEVER, RegStatus.CONFIG_MISSING):
                status = RegStatus.CONFIG_MISSING
            else:
                status = RegStatus.PERMISSION_DENIED
            detail = str(exc)
        except (ConfigMissing, NotFound) as exc:
            status = RegStatus.CONFIG_MISSING
            detail = str(exc)
        except ConfigInvalid as exc:
            status = RegStatus.CONFIG_MISSING
            detail = "invalid config: " + "; ".join(exc.problems)
        except (Unreachable, MalformedDoc) as exc:
            status = RegStatus.SOURCE_UNREACHABLE
            detail = str(exc)
        finished = self.clock.now()
        report = SyncReport(
            user=registration.user,
            started=started,
            finished=finished,
            status=status,
            per_source=tuple(per_source),
            wrote_target=wrote,
            conflicts_flagged=tuple(conflicts),
            notifications_consumed=consumed,
            detail=detail,
        )
        with self._lock:
            registration.last_status = status
            registration.last_sync = finished
            self._save_storage()
            self.last_reports[registration.user] = report
            self.report_log.append(report)
        return report

    # --- config ---------------------------------------------------------------

    def _load_config(self, pod: PodClient) -> SyncConfig:
        try:
            body, _, _ = pod.get(SETTINGS_PATH)
        except NotFound as exc:
            raise ConfigMissing(str(exc)) from exc
        try:
            doc = LinkedDoc.from_bytes(body)
        except (MalformedDoc, ValueError) as exc:
            raise ConfigInvalid([str(exc)]) from exc
        return validate_config(doc)

    def load_config(self, user: AgentId) -> SyncConfig:
        with self._lock:
            registration = self._registrations.get(user)
        if registration is None:
            raise NotRegistered(user.iri)
        pod = PodClient(registration.pod_base_url, token=registration.token,
                        timeout=self.timeout, user_agent=USER_AGENT)
        return self._load_config(pod)

    # --- mode flows -------------------------------------------------------------

    def _fetch_source(self, user: AgentId, url: str, label: str) -> tuple[Calendar | None, str]:
        key = (user.iri, url)
        with self._lock:
            cached = self._source_cache.get(key)
        etag = cached[0] if cached else None
        try:
            calendar, new_etag = fetch_ics(
                url, owner=user, origin=label, etag=etag,
                timeout=self.timeout, user_agent=USER_AGENT,
            )
        except (Unreachable, NotFound, MalformedIcs, UnsupportedFeature):
            return (cached[1] if cached else None), "unreachable"
        if calendar is None:
            return cached[1], "cached"
        with self._lock:
            self._source_cache[key] = (new_etag, calendar)
        return calendar, "fetched"

    def _aux_source(self, registration: Registration, pod: PodClient,
                    config: SyncConfig) -> Callable[[], tuple[Calendar | None, str]]:
        """The pull side of the inbox route, as one more merge source."""
        user = registration.user

        def pull() -> tuple[Calendar | None, str]:
            if config.inbox_route is InboxRoute.SEPARATE_REMOTE_CALENDAR:
                return self._fetch_source(
                    user, config.push_url.rstrip("/") + ".ics", FROMINBOX_LABEL
                )
            path = (
                FROMINBOX_RESOURCE
                if config.inbox_route is InboxRoute.SEPARATE_RESOURCE
                else FROMINBOX_ICS
            )
            try:
                body, _, _ = pod.get(path)
            except NotFound:
                return Calendar.of(user), "fetched"
            if config.inbox_route is InboxRoute.SEPARATE_RESOURCE:
                return from_linked(LinkedDoc.from_bytes(body)), "fetched"
            return parse_ics(body.decode("utf-8"), owner=user), "fetched"

        return pull

    def _sync_hybrid(self, registration: Registration, pod: PodClient, config: SyncConfig,
                     extra_sources: list[Callable[[], tuple[Calendar | None, str]]],
                     ) -> tuple[bool, list[tuple[str, str]], list[tuple[str, str]]]:
        user = registration.user
        per_source: list[tuple[str, str]] = []
        merged = Calendar.of(user)
        rank = 0
        fetchers: list[tuple[str, Callable[[], tuple[Calendar | None, str]]]] = [
            (label, lambda url=url, label=label: self._fetch_source(user, url, label))
            for url, label in config.sources
        ]
        fetchers.extend((FROMINBOX_LABEL, fetch) for fetch in extra_sources)
        for label, fetch in fetchers:
            rank += 1
            calendar, state = fetch()
            per_source.append((label, state))
            if calendar is None:
                continue
            ranked = calendar.with_owner(user).with_events(
                reversion(event, source_rank=rank, origin=label)
                for event in calendar.events.values()
            )
            merged, _ = merge(merged, ranked)
        if config.window_filter is not None:
            merged = clip_calendar(merged, config.window_filter)

        pairs = detect_clashes(merged)
        if pairs:
            events = dict(merged.events)
            for uid in {uid for pair in pairs for uid in pair}:
                events[uid] = replace(events[uid], status=EventStatus.CONFLICT)
            merged = merged.with_events(events.values())

        wrote, stored = self._write_doc(
            pod,
            config.target_path,
            to_linked(merged, registration.pod_base_url + config.target_path).encode(),
        )

        new_pairs = [p for p in pairs if not self._already_flagged(stored, p)]
        if new_pairs:
            body = conflict_doc(user, new_pairs, CONFLICT_NOTIFY_BASE).encode()
            pod.post_inbox(body, "text/plain; charset=utf-8")

        if config.freebusy_path is not None:
            self._write_freebusy(registration, pod, config, merged)
        return wrote, pairs, per_source

    @staticmethod
    def _already_flagged(stored_body: bytes | None, pair: tuple[str, str]) -> bool:
        if stored_body is None:
            return False
        try:
            stored = from_linked(LinkedDoc.from_bytes(stored_body))
        except (MalformedDoc, ValueError):
            return False
        first = stored.events.get(pair[0])
        second = stored.events.get(pair[1])
        return (
            first is not None and second is not None
            and first.status is EventStatus.CONFLICT
            and second.status is EventStatus.CONFLICT
        )

    def _write_doc(self, pod: PodClient, path: str, body: bytes,
                   content_type: str = "text/plain; charset=utf-8") -> tuple[bool, bytes | None]:
        """Compare-and-put: no write when the stored bytes already match.

        Returns (wrote, previously stored body or None).
        """
        for attempt in range(3):
            try:
                stored, etag, _ = pod.get(path)
            except NotFound:
                stored, etag = None, None
            if stored == body:
                return False, stored
            try:
                if etag is None:
                    pod.put(path, body, content_type)
                else:
                    pod.put(path, body, content_type, if_match=etag)
                return True, stored
            except PreconditionFailed:
                continue  # concurrent writer; re-read and retry
        raise Unreachable(f"PUT {path}: etag kept moving")

    def _write_freebusy(self, registration: Registration, pod: PodClient,
                        config: SyncConfig, calendar: Calendar) -> None:
        window = config.window_filter
        if window is None:
            events = calendar.sorted_events()
            if events:
                window = Interval(
                    min(e.interval.start for e in events),
                    max(e.interval.end for e in events),
                )
            else:
                window = Interval(EPOCH, EPOCH.plus(60))
        projection = project_freebusy(calendar, window)
        doc = freebusy_to_doc(projection, registration.pod_base_url + config.freebusy_path)
        self._write_doc(pod, config.freebusy_path, doc.encode())

    def _collect_inbox(self, pod: PodClient) -> list[tuple[str, Event]]:
        """Unprocessed meeting requests, oldest first. Marking is the caller's
        job, after whatever the events feed into has been safely written."""
        batch: list[tuple[str, Event]] = []
        for nid in pod.list_inbox():
            if pod.is_processed(nid):
                continue
            body, _, _ = pod.get_notification(nid)
            try:
                doc = LinkedDoc.from_bytes(body)
            except (MalformedDoc, ValueError):
                continue
            if notification_type(doc) != MEETING_REQUEST:
                continue
            try:
                fragment = from_linked(strip_notification_type(doc))
            except MalformedDoc:
                continue
            for event in fragment.events.values():
                batch.append((nid, reversion(event, source_rank=0, origin="")))
        return batch

    def _sync_solid_only(self, registration: Registration, pod: PodClient,
                         config: SyncConfig) -> tuple[bool, int]:
        user = registration.user
        batch = self._collect_inbox(pod)
        try:
            stored_body, _, _ = pod.get(config.target_path)
            stored = from_linked(LinkedDoc.from_bytes(stored_body))
        except NotFound:
            stored = Calendar.of(user)
        merged = stored.with_owner(user)
        for _, event in batch:
            merged, _ = merge(merged, Calendar.of(user, [event]))
        wrote, _ = self._write_doc(
            pod,
            config.target_path,
            to_linked(merged, registration.pod_base_url + config.target_path).encode(),
        )
        for nid in dict.fromkeys(nid for nid, _ in batch):
            pod.mark_processed(nid)
        if config.freebusy_path is not None:
            self._write_freebusy(registration, pod, config, merged)
        return wrote, len(dict.fromkeys(nid for nid, _ in batch))

    def _route_outward(self, registration: Registration, pod: PodClient,
                       config: SyncConfig, events: list[Event]) -> None:
        if not events:
            return
        user = registration.user
        route = config.inbox_route
        outbound = Calendar.of(user)
        for event in events:
            outbound, _ = merge(outbound, Calendar.of(user, [event]))
        if route is InboxRoute.SEPARATE_REMOTE_CALENDAR:
            for event in outbound.sorted_events():
                try:
                    create_event_remote(config.push_url, event, timeout=self.timeout,
                                        user_agent=USER_AGENT)
                except StaleSequence:
                    pass  # already delivered on an earlier attempt
            return
        path = FROMINBOX_RESOURCE if route is InboxRoute.SEPARATE_RESOURCE else FROMINBOX_ICS
        try:
            body, _, _ = pod.get(path)
            if route is InboxRoute.SEPARATE_RESOURCE:
                existing = from_linked(LinkedDoc.from_bytes(body))
            else:
                existing = parse_ics(body.decode("utf-8"), owner=user)
        except NotFound:
            existing = Calendar.of(user)
        merged, _ = merge(existing.with_owner(user), outbound)
        if route is InboxRoute.SEPARATE_RESOURCE:
            payload = to_linked(merged, registration.pod_base_url + path).encode()
            self._write_doc(pod, path, payload)
        else:
            self._write_doc(pod, path, serialize_ics(merged).encode("utf-8"),
                            content_type="text/calendar; charset=utf-8")

    # --- local storage --------------------------------------------------------

    def _save_storage(self) -> None:
        if self.storage_path is None:
            return
        lines = "".join(
            reg.line() + "\n"
            for reg in sorted(self._registrations.values(), key=lambda r: r.user.iri)
        )
        write_atomic(self.storage_path, lines.encode("utf-8"))

    def _load_storage(self) -> None:
        try:
            text = self.storage_path.read_text("utf-8")
        except OSError as exc:
            raise CorruptState(self.storage_path, f"cannot read: {exc}") from exc
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                registration = Registration.from_line(line)
            except ValueError as exc:
                raise CorruptState(self.storage_path, f"line {number}: {exc}") from exc
            self._registrations[registration.user] = registration

    def status_text(self) -> str:
        with self._lock:
            registrations = sorted(self._registrations.values(), key=lambda r: r.user.iri)
            lines = [
                f"{reg.user.iri} {reg.last_status.value} "
                f"{reg.last_sync.iso() if reg.last_sync else 'never'}"
                for reg in registrations
            ]
        return "".join(line + "\n" for line in lines)


# --- HTTP layer -----------------------------------------------------------------


def make_orchestrator_handler(orch: Orchestrator) -> type[BaseHandler]:
    class OrchestratorHandler(BaseHandler):
        def _guarded(self, action) -> None:
            try:
                action()
            except NotRegistered as exc:
                self.send_text(404, f"not registered: {exc}\n")
            except AlreadyRegistered as exc:
                self.send_text(409, f"already registered: {exc}\n")
            except GrantRejected as exc:
                self.send_text(403, f"grant rejected: {exc}\n")
            except PodUnreachable as exc:
                self.send_text(502, f"pod unreachable: {exc}\n")
            except (ValueError, CaldeskError) as exc:
                self.send_text(400, f"bad request: {exc}\n")

        def do_GET(self):
            self._guarded(self._get)

        def do_POST(self):
            self._guarded(self._post)

        def do_DELETE(self):
            self._guarded(self._delete)

        def _get(self):
            if self.path == "/health":
                self.send_text(200, "ok\n")
                return
            if self.path == "/status":
                self.send_text(200, orch.status_text())
                return
            self.send_text(404, "not found\n")

        def _post(self):
            if self.path == "/register":
                lines = self.read_body().decode("utf-8").splitlines()
                if len(lines) != 3:
                    raise ValueError("expected 3 lines: user iri, pod url, owner secret")
                registration = orch.register(
                    AgentId(lines[0].strip()), lines[1].strip(),
                    owner_secret=lines[2].strip(),
                )
                self.send_text(201, f"registered {registration.user.iri}\n")
                return
            if self.path.startswith("/sync/"):
                user = AgentId(unquote(self.path[len("/sync/"):]))
                report = orch.sync_user(user)
                self.send_text(200, report.text())
                return
            self.send_text(404, "not found\n")

        def _delete(self):
            if self.path.startswith("/register/"):
                user = AgentId(unquote(self.path[len("/register/"):]))
                orch.deregister(user)
                self.send_text(200, "ok\n")
                return
            self.send_text(404, "not found\n")

    return OrchestratorHandler


def serve_orchestrator(orch: Orchestrator, host: str = "127.0.0.1",
                       port: int = 0) -> RunningServer:
    return start_server(make_orchestrator_handler(orch), host, port)


def encode_user(user: AgentId) -> str:
    """Percent-encoding used in /sync/{user} and /register/{user} URLs."""
    return quote(user.iri, safe="")
