"""Scripted multi-party scenarios: a line-oriented format plus a runner that
stands up real pods, external calendar services, and an orchestrator in
process and checks expectations step by step.

Format, one step per line (a line whose first non-blank character is ``#``
is a comment — agent IRIs contain fragments, so ``#`` never starts a comment
mid-line — and shlex quoting applies)::

    {actor} {action} {argument}... [=> {expectation}]

``harness`` is a reserved actor for declarations and control (servers, the
manual clock, snapshots). Every other actor must first be declared with
``harness pod {actor} {agent-iri}`` and acts as that pod's owner. Times are
ISO 8601 UTC instants; durations are ``{n}m`` or ``{n}h``.

Expectations: ``=> ok`` (default), ``=> error {ErrorName}``,
``=> status {Ok|...}`` after ``sync``, and ``=> slots {iso,...|-}`` after
``find``. The ``expect*`` actions assert on their own.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .errors import CaldeskError, NotFound, ScenarioParseError
from .extcal import ExternalCalendarService, serve_extcal
from .httpbase import ManualClock
from .linked import LinkedDoc, from_linked, notification_type
from .model import AgentId, Event, EventStatus, EventVersion, Instant, Interval
from .orchestrator import (
    DEFAULT_TARGET,
    ORCHESTRATOR_AGENT,
    InboxRoute,
    Mode,
    Orchestrator,
    SyncConfig,
    SyncReport,
    encode_config,
)
from .podstore import AccessMode, AclEntry, PodClient, PodStore, serve_pod
from .scheduling import (
    MeetingRequest,
    Slot,
    book_via_external,
    book_via_inbox,
    fetch_freebusy,
    joint_availability,
)

_DURATION = re.compile(r"^([0-9]+)([mh])$")

FREEBUSY_RESOURCE = "/calendar/freebusy"


def parse_duration(text: str) -> int:
    """``{n}m`` or ``{n}h`` to seconds."""
    match = _DURATION.match(text)
    if match is None:
        raise ValueError(f"bad duration (want e.g. 45m or 2h): {text!r}")
    value = int(match.group(1))
    if value == 0:
        raise ValueError(f"duration must be positive: {text!r}")
    return value * (60 if match.group(2) == "m" else 3600)


@dataclass(frozen=True)
class Step:
    line_no: int
    actor: str
    action: str
    args: tuple[str, ...]
    expect: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    steps: tuple[Step, ...]


# action -> minimum argument count, per actor kind
_HARNESS_ACTIONS = {
    "pod": 2,
    "extcal": 1,
    "orch": 0,
    "clock": 1,
    "advance": 1,
    "tick": 0,
    "seed": 5,
    "snapshot": 3,
}
_USER_ACTIONS = {
    "grant-orchestrator": 0,
    "allow-inbox": 1,
    "allow-freebusy": 1,
    "config": 1,
    "register": 0,
    "deregister": 0,
    "sync": 0,
    "book-external": 5,
    "book-inbox": 5,
    "find": 5,
    "expect": 2,
    "expect-event": 2,
    "expect-inbox": 1,
    "expect-report": 1,
}
_EXPECT_KINDS = {"ok": 0, "error": 1, "status": 1, "slots": 1}


def parse_scenario(text: str, name: str) -> Scenario:
    """Parse scenario text; raises ScenarioParseError with the offending line."""
    steps: list[Step] = []
    declared: set[str] = set()
    for line_no, raw in enumerate(text.split("\n"), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            tokens = shlex.split(raw)
        except ValueError as exc:
            raise ScenarioParseError(line_no, str(exc)) from exc
        if not tokens:
            continue
        if len(tokens) < 2:
            raise ScenarioParseError(line_no, "a step needs an actor and an action")
        actor, action = tokens[0], tokens[1]
        rest = tokens[2:]
        expect: tuple[str, ...] | None = None
        if "=>" in rest:
            cut = rest.index("=>")
            rest, tail = rest[:cut], rest[cut + 1:]
            if not tail or tail[0] not in _EXPECT_KINDS:
                raise ScenarioParseError(
                    line_no, f"expectation must start with one of {sorted(_EXPECT_KINDS)}"
                )
            if len(tail) != 1 + _EXPECT_KINDS[tail[0]]:
                raise ScenarioParseError(line_no, f"malformed expectation: {' '.join(tail)}")
            expect = tuple(tail)
        if actor == "harness":
            table = _HARNESS_ACTIONS
        else:
            if actor not in declared:
                raise ScenarioParseError(line_no, f"actor {actor!r} has no pod yet")
            table = _USER_ACTIONS
        if action not in table:
            raise ScenarioParseError(line_no, f"unknown action {action!r} for {actor!r}")
        if len(rest) < table[action]:
            raise ScenarioParseError(
                line_no, f"{action} needs at least {table[action]} argument(s)"
            )
        if actor == "harness" and action == "pod":
            if rest[0] in declared or rest[0] == "harness":
                raise ScenarioParseError(line_no, f"actor {rest[0]!r} already declared")
            declared.add(rest[0])
        steps.append(Step(line_no, actor, action, tuple(rest), expect))
    if not steps:
        raise ScenarioParseError(0, "scenario has no steps")
    return Scenario(name, tuple(steps))


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.stem)


def shipped_scenarios() -> dict[str, Path]:
    """Scenario files bundled with the package, keyed by bare name."""
    folder = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(folder.glob("*.scn"))}


def resolve_scenario(ref: str) -> Path:
    """A shipped scenario name, or a filesystem path to a ``.scn`` file."""
    shipped = shipped_scenarios()
    if ref in shipped:
        return shipped[ref]
    path = Path(ref)
    if path.exists():
        return path
    raise FileNotFoundError(f"no scenario named {ref!r} (shipped: {', '.join(shipped)})")


class StepFailure(Exception):
    """An expectation did not hold; aborts the run."""


@dataclass
class _Pod:
    actor: str
    agent: AgentId
    secret: str
    store: PodStore
    server: object
    admin: PodClient

    @property
    def base_url(self) -> str:
        return self.server.base_url


class ScenarioRunner:
    """Executes a parsed scenario against in-process servers over real HTTP."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.clock = ManualClock(Instant.from_iso("2023-05-01T00:00:00Z"))
        self.pods: dict[str, _Pod] = {}
        self.extcals: dict[str, tuple[ExternalCalendarService, object]] = {}
        self.orch: Orchestrator | None = None
        self.snapshots: dict[str, bytes] = {}
        # (guest actor, host actor) -> token for guest's agent on host's pod
        self.guest_tokens: dict[tuple[str, str], str] = {}

    def run(self, out: Callable[[str], None] = print) -> bool:
        ok = True
        try:
            for step in self.scenario.steps:
                try:
                    self._execute(step)
                except StepFailure as exc:
                    out(f"FAIL line {step.line_no}: {self._headline(step)}: {exc}")
                    ok = False
                    break
                out(f"ok   line {step.line_no}: {self._headline(step)}")
        finally:
            self._cleanup()
        verdict = "PASS" if ok else "FAIL"
        out(f"scenario {self.scenario.name}: {verdict}")
        return ok

    @staticmethod
    def _headline(step: Step) -> str:
        shown = " ".join(step.args[:3])
        return f"{step.actor} {step.action}" + (f" {shown}" if shown else "")

    def _cleanup(self) -> None:
        for pod in self.pods.values():
            pod.server.stop()
        for _, server in self.extcals.values():
            server.stop()

    # --- step execution -------------------------------------------------------

    def _execute(self, step: Step) -> None:
        expect = step.expect or ("ok",)
        handler = getattr(self, "_do_" + step.action.replace("-", "_"))
        try:
            result = handler(step)
        except StepFailure:
            raise
        except CaldeskError as exc:
            if expect[0] == "error" and type(exc).__name__ == expect[1]:
                return
            raise StepFailure(f"unexpected {type(exc).__name__}: {exc}") from exc
        except ValueError as exc:
            raise StepFailure(str(exc)) from exc
        if expect[0] == "error":
            raise StepFailure(f"expected {expect[1]}, but the step succeeded")
        if expect[0] == "status":
            if not isinstance(result, SyncReport):
                raise StepFailure("a status expectation only follows sync")
            if result.status.value != expect[1]:
                raise StepFailure(f"sync ended {result.status.value}, expected {expect[1]}")
        elif expect[0] == "slots":
            if not isinstance(result, list):
                raise StepFailure("a slots expectation only follows find")
            got = ",".join(slot.interval.start.iso() for slot in result) or "-"
            if got != expect[1]:
                raise StepFailure(f"slots {got}, expected {expect[1]}")

    # --- harness actions ------------------------------------------------------

    def _do_pod(self, step: Step) -> None:
        actor, iri = step.args[0], step.args[1]
        agent = AgentId(iri)
        secret = f"{actor}-secret"
        store = PodStore(agent, secret, clock=self.clock)
        server = serve_pod(store)
        admin = PodClient(server.base_url, owner_secret=secret)
        self.pods[actor] = _Pod(actor, agent, secret, store, server, admin)

    def _do_extcal(self, step: Step) -> None:
        name = step.args[0]
        if name in self.extcals:
            raise StepFailure(f"external calendar {name!r} already declared")
        service = ExternalCalendarService(clock=self.clock)
        self.extcals[name] = (service, serve_extcal(service))

    def _do_orch(self, step: Step) -> None:
        if self.orch is not None:
            raise StepFailure("orchestrator already declared")
        self.orch = Orchestrator(clock=self.clock)

    def _do_clock(self, step: Step) -> None:
        self.clock.set(Instant.from_iso(step.args[0]))

    def _do_advance(self, step: Step) -> None:
        self.clock.advance(parse_duration(step.args[0]))

    def _do_tick(self, step: Step) -> None:
        self._need_orch().tick(wait=True)

    def _do_seed(self, step: Step) -> None:
        service, _ = self._extcal(step.args[0])
        cal_id, uid, start, duration = step.args[1:5]
        summary = " ".join(step.args[5:])
        service.create_event(cal_id, self._event(uid, start, duration, summary))

    def _do_snapshot(self, step: Step) -> None:
        pod = self._pod(step.args[0])
        body, _, _ = pod.admin.get(step.args[1])
        self.snapshots[step.args[2]] = body

    # --- user actions ---------------------------------------------------------

    def _do_grant_orchestrator(self, step: Step) -> None:
        pod = self._pod(step.actor)
        read = frozenset({AccessMode.READ})
        read_write = frozenset({AccessMode.READ, AccessMode.WRITE})
        full = frozenset({AccessMode.READ, AccessMode.WRITE, AccessMode.APPEND})
        pod.admin.put_acl(pod.admin.get_acl() + [
            AclEntry("/settings/orchestrator", ORCHESTRATOR_AGENT.iri, read),
            AclEntry("/calendar", ORCHESTRATOR_AGENT.iri, read_write),
            AclEntry("/inbox/", ORCHESTRATOR_AGENT.iri, full),
        ])

    def _allow(self, host: str, guest: str, path: str, modes: frozenset[AccessMode]) -> None:
        pod = self._pod(host)
        guest_pod = self._pod(guest)
        pod.admin.put_acl(pod.admin.get_acl() + [AclEntry(path, guest_pod.agent.iri, modes)])
        if (guest, host) not in self.guest_tokens:
            self.guest_tokens[(guest, host)] = pod.admin.issue_token(guest_pod.agent)

    def _do_allow_inbox(self, step: Step) -> None:
        self._allow(step.actor, step.args[0], "/inbox/", frozenset({AccessMode.APPEND}))

    def _do_allow_freebusy(self, step: Step) -> None:
        self._allow(step.actor, step.args[0], FREEBUSY_RESOURCE, frozenset({AccessMode.READ}))

    def _do_config(self, step: Step) -> None:
        pod = self._pod(step.actor)
        mode: Mode | None = None
        sources: list[tuple[str, str]] = []
        kwargs: dict[str, object] = {}
        for arg in step.args:
            key, sep, value = arg.partition("=")
            if not sep:
                raise StepFailure(f"config arguments are key=value, got {arg!r}")
            if key == "mode":
                mode = Mode(value)
            elif key == "source":
                svc, cal_id, label = self._split(value, 3, "source wants svc:calendar:label")
                _, base = self._extcal(svc)
                sources.append((f"{base}/cal/{cal_id}.ics", label))
            elif key == "target":
                kwargs["target_path"] = value
            elif key == "freebusy":
                kwargs["freebusy_path"] = value
            elif key == "route":
                kwargs["inbox_route"] = InboxRoute(value)
            elif key == "push":
                svc, cal_id = self._split(value, 2, "push wants svc:calendar")
                _, base = self._extcal(svc)
                kwargs["push_url"] = f"{base}/cal/{cal_id}"
            elif key == "interval":
                kwargs["interval_seconds"] = int(value)
            elif key == "window":
                lo, _, hi = value.partition("..")
                kwargs["window_filter"] = Interval(Instant.from_iso(lo), Instant.from_iso(hi))
            else:
                raise StepFailure(f"unknown config key {key!r}")
        if mode is None:
            raise StepFailure("config needs mode=...")
        config = SyncConfig(mode=mode, sources=tuple(sources), **kwargs)
        pod.admin.put("/settings/orchestrator", encode_config(config).encode(),
                      "text/plain; charset=utf-8")

    def _do_register(self, step: Step) -> None:
        pod = self._pod(step.actor)
        self._need_orch().register(pod.agent, pod.base_url, owner_secret=pod.secret)

    def _do_deregister(self, step: Step) -> None:
        self._need_orch().deregister(self._pod(step.actor).agent)

    def _do_sync(self, step: Step) -> SyncReport:
        return self._need_orch().sync_user(self._pod(step.actor).agent)

    def _do_book_external(self, step: Step) -> None:
        uid, start, duration, summary = step.args[0:4]
        organizer = self._pod(step.actor)
        participants: list[AgentId] = []
        booking_urls: dict[AgentId, str] = {}
        for assign in step.args[4:]:
            actor, sep, target = assign.partition("=")
            if not sep:
                raise StepFailure(f"bookings are actor=svc:calendar, got {assign!r}")
            svc, cal_id = self._split(target, 2, "booking target wants svc:calendar")
            _, base = self._extcal(svc)
            agent = self._pod(actor).agent
            participants.append(agent)
            booking_urls[agent] = f"{base}/cal/{cal_id}"
        request = self._request(organizer.agent, participants, uid, start, duration, summary)
        report = book_via_external(request, booking_urls, stamped=self.clock.now())
        self._all_booked(report)

    def _do_book_inbox(self, step: Step) -> None:
        uid, start, duration, summary = step.args[0:4]
        organizer = self._pod(step.actor)
        participants: list[AgentId] = []
        inboxes: dict[AgentId, PodClient] = {}
        for actor in dict.fromkeys(list(step.args[4:]) + [step.actor]):
            pod = self._pod(actor)
            participants.append(pod.agent)
            inboxes[pod.agent] = self._client_for(step.actor, actor)
        request = self._request(organizer.agent, participants, uid, start, duration, summary)
        report = book_via_inbox(request, inboxes, stamped=self.clock.now())
        self._all_booked(report)

    def _do_find(self, step: Step) -> list[Slot]:
        actors, win_start, win_end, duration, granularity = step.args[0:5]
        freebusies = []
        for actor in actors.split(","):
            client = self._client_for(step.actor, actor)
            freebusies.append(fetch_freebusy(client, FREEBUSY_RESOURCE))
        window = Interval(Instant.from_iso(win_start), Instant.from_iso(win_end))
        return joint_availability(freebusies, window,
                                  parse_duration(duration), parse_duration(granularity))

    # --- user assertions ------------------------------------------------------

    def _do_expect(self, step: Step) -> None:
        pod = self._pod(step.actor)
        path, check = step.args[0], step.args[1]
        if check == "absent":
            try:
                pod.admin.get(path)
            except NotFound:
                return
            raise StepFailure(f"{path} exists")
        body, _, _ = pod.admin.get(path)
        if check == "exists":
            return
        if check == "equals-snapshot":
            if len(step.args) < 3:
                raise StepFailure("equals-snapshot needs a snapshot key")
            key = step.args[2]
            if key not in self.snapshots:
                raise StepFailure(f"no snapshot {key!r}")
            if body != self.snapshots[key]:
                raise StepFailure(f"{path} differs from snapshot {key!r}")
            return
        raise StepFailure(f"unknown expect check {check!r}")

    def _do_expect_event(self, step: Step) -> None:
        pod = self._pod(step.actor)
        path, uid = step.args[0], step.args[1]
        body, _, _ = pod.admin.get(path)
        cal = from_linked(LinkedDoc.from_bytes(body))
        event = cal.events.get(uid)
        if event is None:
            raise StepFailure(f"{path} has no event {uid}")
        actual = {
            "status": event.status.value,
            "start": event.interval.start.iso(),
            "end": event.interval.end.iso(),
            "summary": event.summary,
            "sequence": str(event.version.sequence),
            "origin": event.origin,
        }
        for field, want in self._pairs(step.args[2:]):
            if field not in actual:
                raise StepFailure(f"unknown event field {field!r}")
            if actual[field] != want:
                raise StepFailure(f"{uid} {field} is {actual[field]!r}, expected {want!r}")

    def _do_expect_inbox(self, step: Step) -> None:
        pod = self._pod(step.actor)
        want_type: str | None = None
        want_processed: bool | None = None
        want_count: int | None = None
        for field, value in self._pairs(step.args):
            if field == "type":
                want_type = value
            elif field == "processed":
                want_processed = value == "true"
            elif field == "count":
                want_count = int(value)
            else:
                raise StepFailure(f"unknown inbox filter {field!r}")
        matching = 0
        for nid in pod.admin.list_inbox():
            body, _, _ = pod.admin.get_notification(nid)
            kind = notification_type(LinkedDoc.from_bytes(body))
            if want_type is not None and kind != want_type:
                continue
            if want_processed is not None and pod.admin.is_processed(nid) != want_processed:
                continue
            matching += 1
        if want_count is None:
            if matching == 0:
                raise StepFailure("no matching notification in the inbox")
        elif matching != want_count:
            raise StepFailure(f"{matching} matching notification(s), expected {want_count}")

    def _do_expect_report(self, step: Step) -> None:
        report = self._need_orch().last_reports.get(self._pod(step.actor).agent)
        if report is None:
            raise StepFailure("no sync has produced a report yet")
        actual = {
            "status": report.status.value,
            "wrote": "true" if report.wrote_target else "false",
            "consumed": str(report.notifications_consumed),
            "conflicts": str(len(report.conflicts_flagged)),
        }
        for field, want in self._pairs(step.args):
            if field not in actual:
                raise StepFailure(f"unknown report field {field!r}")
            if actual[field] != want:
                raise StepFailure(f"report {field} is {actual[field]!r}, expected {want!r}")

    # --- shared helpers -------------------------------------------------------

    def _pod(self, actor: str) -> _Pod:
        if actor not in self.pods:
            raise StepFailure(f"actor {actor!r} has no pod")
        return self.pods[actor]

    def _extcal(self, name: str) -> tuple[ExternalCalendarService, str]:
        if name not in self.extcals:
            raise StepFailure(f"no external calendar service {name!r}")
        service, server = self.extcals[name]
        return service, server.base_url

    def _need_orch(self) -> Orchestrator:
        if self.orch is None:
            raise StepFailure("no orchestrator declared (harness orch)")
        return self.orch

    def _client_for(self, guest: str, host: str) -> PodClient:
        """A client acting as ``guest`` against ``host``'s pod."""
        pod = self._pod(host)
        if guest == host:
            return pod.admin
        token = self.guest_tokens.get((guest, host))
        if token is None:
            raise StepFailure(f"{host!r} has not granted {guest!r} access (allow-*)")
        return PodClient(pod.base_url, token=token)

    def _event(self, uid: str, start: str, duration: str, summary: str) -> Event:
        begin = Instant.from_iso(start)
        return Event(
            uid=uid,
            interval=Interval(begin, begin.plus(parse_duration(duration))),
            summary=summary,
            version=EventVersion(sequence=0, stamped=self.clock.now()),
            status=EventStatus.CONFIRMED,
        )

    def _request(self, organizer: AgentId, participants: list[AgentId],
                 uid: str, start: str, duration: str, summary: str) -> MeetingRequest:
        begin = Instant.from_iso(start)
        slot = Slot(Interval(begin, begin.plus(parse_duration(duration))))
        return MeetingRequest(organizer, tuple(participants), slot, summary, uid)

    @staticmethod
    def _all_booked(report) -> None:
        failed = [a for a in report.attempts if not a.ok]
        if failed:
            details = "; ".join(f"{a.participant.iri}: {a.detail}" for a in failed)
            raise StepFailure(f"booking failed for {details}")

    @staticmethod
    def _split(value: str, parts: int, hint: str) -> list[str]:
        pieces = value.split(":")
        if len(pieces) != parts:
            raise StepFailure(f"{hint}, got {value!r}")
        return pieces

    @staticmethod
    def _pairs(args: tuple[str, ...]) -> list[tuple[str, str]]:
        pairs = []
        for arg in args:
            key, sep, value = arg.partition("=")
            if not sep:
                raise StepFailure(f"expected key=value, got {arg!r}")
            pairs.append((key, value))
        return pairs


def run_scenario(path: Path | str, out: Callable[[str], None] = print) -> bool:
    return ScenarioRunner(load_scenario(path)).run(out)
