"""Orchestrator: registration lifecycle, config parsing, the three sync
modes, the tick loop, and the HTTP face."""

import random
import threading

import pytest
import requests

from caldesk.errors import (
    AlreadyRegistered,
    ConfigInvalid,
    CorruptState,
    GrantRejected,
    NotRegistered,
    PodUnreachable,
)
from caldesk.extcal import ExternalCalendarService, serve_extcal
from caldesk.httpbase import ManualClock
from caldesk.ics import parse_ics
from caldesk.linked import (
    CONFLICT_DETECTED,
    LinkedDoc,
    freebusy_from_doc,
    from_linked,
    notification_type,
)
from caldesk.model import (
    Calendar,
    Event,
    EventStatus,
    EventVersion,
    Interval,
)
from caldesk.orchestrator import (
    InboxRoute,
    Mode,
    Orchestrator,
    RegStatus,
    Registration,
    SyncConfig,
    encode_config,
    encode_user,
    serve_orchestrator,
    validate_config,
)
from caldesk.podstore import PodClient
from caldesk.scheduling import MeetingRequest, Slot, book_via_inbox

from helpers import ALICE, BOB, CAROL, BASE, PodRig, at, span

pytestmark = pytest.mark.filterwarnings("ignore::ResourceWarning")


def ev(uid, hours, seq=0, status=EventStatus.CONFIRMED, summary=None):
    return Event(
        uid=uid,
        interval=span(*hours),
        summary=summary or f"meeting {uid}",
        version=EventVersion(sequence=seq, stamped=at(0)),
        status=status,
    )


@pytest.fixture()
def rig():
    rig = PodRig(ALICE)
    yield rig
    rig.stop()


@pytest.fixture()
def extcal():
    service = ExternalCalendarService()
    server = serve_extcal(service)
    yield service, server
    server.stop()


def hybrid_config(server, *cal_ids, **kwargs):
    sources = tuple(
        (f"{server.base_url}/cal/{cal_id}.ics", cal_id) for cal_id in cal_ids
    )
    return SyncConfig(mode=Mode.HYBRID_EXTERNAL_FIRST, sources=sources, **kwargs)


def read_target(rig, path="/calendar/combined"):
    body, etag, _ = rig.admin.get(path)
    return from_linked(LinkedDoc.from_bytes(body)), body, etag


# --- config encoding and validation ------------------------------------------


def test_config_round_trip_all_fields():
    config = SyncConfig(
        mode=Mode.SOLID_FIRST_HYBRID,
        sources=(("http://x.example/a.ics", "work"), ("http://x.example/b.ics", "home")),
        target_path="/calendar/combined",
        freebusy_path="/calendar/freebusy",
        inbox_route=InboxRoute.SEPARATE_REMOTE_CALENDAR,
        push_url="http://x.example/cal/push",
        window_filter=span(0, 48),
        interval_seconds=60,
    )
    assert validate_config(encode_config(config)) == config


def test_config_round_trip_minimal():
    config = SyncConfig(mode=Mode.SOLID_ONLY)
    assert validate_config(encode_config(config)) == config


def test_config_source_order_follows_index():
    config = SyncConfig(
        mode=Mode.HYBRID_EXTERNAL_FIRST,
        sources=(("http://x.example/0.ics", "zero"), ("http://x.example/1.ics", "one")),
    )
    doc = encode_config(config)
    # the document is sorted lexicographically, yet parsing restores index order
    assert validate_config(doc).sources == config.sources


def test_config_missing_mode():
    doc = encode_config(SyncConfig(mode=Mode.SOLID_ONLY))
    stripped = LinkedDoc(tuple(l for l in doc.lines if "#mode>" not in l))
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_config(stripped)
    assert any("mode" in p for p in excinfo.value.problems)


def test_config_hybrid_needs_sources():
    doc = encode_config(SyncConfig(mode=Mode.HYBRID_EXTERNAL_FIRST))
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_config(doc)
    assert any("at least one" in p for p in excinfo.value.problems)


def test_config_solid_first_hybrid_needs_route():
    doc = encode_config(SyncConfig(mode=Mode.SOLID_FIRST_HYBRID))
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_config(doc)
    assert any("inboxRoute" in p for p in excinfo.value.problems)


def test_config_remote_route_needs_push_url():
    doc = encode_config(
        SyncConfig(mode=Mode.SOLID_FIRST_HYBRID, inbox_route=InboxRoute.SEPARATE_REMOTE_CALENDAR)
    )
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_config(doc)
    assert any("pushUrl" in p for p in excinfo.value.problems)


def test_config_enumerates_every_problem():
    from caldesk.linked import VOCAB, statement

    doc = LinkedDoc.from_statements([
        statement("http://c.example/cfg", VOCAB + "mode", "NoSuchMode"),
        statement("http://c.example/cfg", VOCAB + "interval", "-5"),
        statement("http://c.example/cfg", VOCAB + "windowStart", "2023-05-01T00:00:00Z"),
        statement("http://c.example/cfg", VOCAB + "target", "relative/path"),
    ])
    with pytest.raises(ConfigInvalid) as excinfo:
        validate_config(doc)
    text = " | ".join(excinfo.value.problems)
    for needle in ("NoSuchMode", "interval", "windowStart", "target"):
        assert needle in text
    assert len(excinfo.value.problems) >= 4


def test_registration_line_round_trip():
    reg = Registration(ALICE, "http://127.0.0.1:7000", "tok-abc", at(0),
                       last_status=RegStatus.OK)
    parsed = Registration.from_line(reg.line())
    assert parsed.user == ALICE
    assert parsed.pod_base_url == "http://127.0.0.1:7000"
    assert parsed.token == "tok-abc"
    assert parsed.last_status is RegStatus.OK
    with pytest.raises(ValueError):
        Registration.from_line("too few fields")


# --- registration lifecycle ------------------------------------------------------


def test_register_and_reuse_token(rig):
    orch = Orchestrator()
    reg = orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    assert reg.last_status is RegStatus.NEVER
    assert reg.pod_base_url == rig.base_url
    # the token authenticates as the orchestrator agent on the pod
    assert rig.store.resolve(token=reg.token).iri == orch.agent.iri
    with pytest.raises(AlreadyRegistered):
        orch.register(ALICE, rig.base_url, owner_secret=rig.secret)


def test_register_bad_secret(rig):
    orch = Orchestrator()
    with pytest.raises(GrantRejected):
        orch.register(ALICE, rig.base_url, owner_secret="wrong")
    assert orch.registrations() == []


def test_register_unreachable_pod():
    orch = Orchestrator(timeout=0.5)
    with pytest.raises(PodUnreachable):
        orch.register(ALICE, "http://127.0.0.1:9", owner_secret="whatever")


def test_register_with_preissued_token(rig):
    orch = Orchestrator()
    token = rig.admin.issue_token(orch.agent)
    reg = orch.register(ALICE, rig.base_url, token=token)
    assert reg.token == token


def test_register_with_revoked_token_rejected(rig):
    orch = Orchestrator()
    token = rig.admin.issue_token(orch.agent)
    rig.admin.revoke_token(token)
    with pytest.raises(GrantRejected):
        orch.register(ALICE, rig.base_url, token=token)


def test_deregister(rig):
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.deregister(ALICE)
    assert orch.registrations() == []
    with pytest.raises(NotRegistered):
        orch.deregister(ALICE)
    with pytest.raises(NotRegistered):
        orch.sync_user(ALICE)
    assert orch.tick(wait=True) == []


def test_storage_round_trip(tmp_path, rig):
    path = tmp_path / "registrations.txt"
    orch = Orchestrator(storage_path=path)
    reg = orch.register(ALICE, rig.base_url, owner_secret=rig.secret)

    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].split() == [
        ALICE.iri, rig.base_url, reg.token, reg.created.iso(), "Never",
    ]

    reloaded = Orchestrator(storage_path=path)
    assert [r.user for r in reloaded.registrations()] == [ALICE]
    assert reloaded.registrations()[0].token == reg.token


def test_storage_corrupt(tmp_path):
    path = tmp_path / "registrations.txt"
    path.write_text("not a registration line\n")
    with pytest.raises(CorruptState):
        Orchestrator(storage_path=path)


# --- hybrid sync -----------------------------------------------------------------


def test_hybrid_merges_sources_and_is_idempotent(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, [ev("w1", (9, 10))]))
    service.put_calendar("home", Calendar.of(ALICE, [ev("h1", (12, 13))]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work", "home"))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK
    assert report.wrote_target
    assert report.per_source == (("work", "fetched"), ("home", "fetched"))

    target, body1, etag1 = read_target(rig)
    assert set(target.events) == {"w1", "h1"}
    assert target.events["w1"].origin == "work"
    assert target.events["h1"].origin == "home"

    second = orch.sync_user(ALICE)
    assert second.status is RegStatus.OK
    assert not second.wrote_target
    assert second.per_source == (("work", "cached"), ("home", "cached"))
    _, body2, etag2 = read_target(rig)
    assert body2 == body1
    assert etag2 == etag1


def test_hybrid_source_rank_breaks_version_ties(rig, extcal):
    service, server = extcal
    # same uid, identical version: the later-listed source wins the merge
    service.put_calendar("work", Calendar.of(ALICE, [ev("x", (9, 10), summary="from work")]))
    service.put_calendar("home", Calendar.of(ALICE, [ev("x", (9, 10), summary="from home")]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work", "home"))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)
    target, _, _ = read_target(rig)
    assert target.events["x"].summary == "from home"


def test_hybrid_window_filter(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, [
        ev("in", (9, 10)),
        ev("out", (100, 101)),
        ev("straddle", (47, 49)),
    ]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work", window_filter=span(0, 48)))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)
    target, _, _ = read_target(rig)
    assert set(target.events) == {"in", "straddle"}
    # events overlapping the window are kept whole
    assert target.events["straddle"].interval == span(47, 49)


def test_hybrid_writes_freebusy_without_details(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, [
        ev("secret-uid-1", (9, 10), summary="Union negotiation"),
        ev("secret-uid-2", (9.5, 11), summary="Doctor"),
    ]))
    rig.grant_orchestrator()
    rig.write_config(
        hybrid_config(server, "work", freebusy_path="/calendar/freebusy",
                      window_filter=span(0, 24))
    )

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)

    body, _, _ = rig.admin.get("/calendar/freebusy")
    fb = freebusy_from_doc(LinkedDoc.from_bytes(body))
    assert fb.busy == (span(9, 11),)
    text = body.decode()
    assert "secret-uid" not in text
    assert "negotiation" not in text


def test_hybrid_clash_flags_and_notifies_once(rig, extcal):
    service, server = extcal
    service.put_calendar("a", Calendar.of(ALICE, [ev("m1", (10, 11))]))
    service.put_calendar("b", Calendar.of(ALICE, [ev("m2", (10.5, 11.5))]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "a", "b"))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.conflicts_flagged == (("m1", "m2"),)

    target, body1, _ = read_target(rig)
    assert target.events["m1"].status is EventStatus.CONFLICT
    assert target.events["m2"].status is EventStatus.CONFLICT

    owner = rig.store.resolve(owner_secret=rig.secret)
    notes = rig.store.list_inbox(owner)
    conflict_notes = [
        n for n in notes
        if notification_type(LinkedDoc.from_bytes(n.body)) == CONFLICT_DETECTED
    ]
    assert len(conflict_notes) == 1
    assert "m1" in conflict_notes[0].body.decode()

    # flagging is stable and the notification is not repeated
    again = orch.sync_user(ALICE)
    assert again.conflicts_flagged == (("m1", "m2"),)
    assert not again.wrote_target
    _, body2, _ = read_target(rig)
    assert body2 == body1
    notes = rig.store.list_inbox(owner)
    assert len([
        n for n in notes
        if notification_type(LinkedDoc.from_bytes(n.body)) == CONFLICT_DETECTED
    ]) == 1


def test_hybrid_unreachable_source_uses_last_known_good(rig):
    service = ExternalCalendarService()
    server = serve_extcal(service)
    service.put_calendar("work", Calendar.of(ALICE, [ev("w1", (9, 10))]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work"))

    orch = Orchestrator(timeout=0.5)
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    first = orch.sync_user(ALICE)
    assert first.per_source == (("work", "fetched"),)
    _, body1, _ = read_target(rig)

    server.stop()
    second = orch.sync_user(ALICE)
    assert second.status is RegStatus.OK
    assert second.per_source == (("work", "unreachable"),)
    target, body2, _ = read_target(rig)
    assert body2 == body1
    assert set(target.events) == {"w1"}


def test_hybrid_unreachable_source_without_cache_keeps_going(rig, extcal):
    service, server = extcal
    service.put_calendar("up", Calendar.of(ALICE, [ev("u1", (9, 10))]))
    rig.grant_orchestrator()
    config = SyncConfig(
        mode=Mode.HYBRID_EXTERNAL_FIRST,
        sources=(
            ("http://127.0.0.1:9/cal/down.ics", "down"),
            (f"{server.base_url}/cal/up.ics", "up"),
        ),
    )
    rig.write_config(config)

    orch = Orchestrator(timeout=0.5)
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK
    assert report.per_source == (("down", "unreachable"), ("up", "fetched"))
    target, _, _ = read_target(rig)
    assert set(target.events) == {"u1"}


def test_sync_without_config_reports_missing(rig):
    rig.grant_orchestrator()
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.CONFIG_MISSING


def test_sync_without_config_grant_reports_missing_then_denied(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, []))
    rig.write_config(hybrid_config(server, "work"))
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)

    # no grants at all: the config read is forbidden, never having synced
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.CONFIG_MISSING

    # after a successful sync, losing access means denied, not missing
    rig.grant_orchestrator()
    assert orch.sync_user(ALICE).status is RegStatus.OK
    rig.store.remove_agent_acl(rig.secret, orch.agent.iri)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.PERMISSION_DENIED


def test_invalid_config_counts_as_missing(rig):
    rig.grant_orchestrator()
    rig.admin.put("/settings/orchestrator", b"not a config\n", "text/plain")
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.CONFIG_MISSING
    assert "invalid config" in report.detail or "statement" in report.detail


def test_revocation_freezes_pod(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, [ev("w1", (9, 10))]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work"))

    orch = Orchestrator()
    reg = orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    assert orch.sync_user(ALICE).status is RegStatus.OK
    _, _, etag_before = read_target(rig)

    rig.admin.revoke_token(reg.token)
    service.put_calendar("work", Calendar.of(ALICE, [ev("w2", (14, 15))]))
    for _ in range(5):
        assert orch.sync_user(ALICE).status is RegStatus.PERMISSION_DENIED
    _, _, etag_after = read_target(rig)
    assert etag_after == etag_before


# --- solid-only sync ----------------------------------------------------------


def solid_only_rig(rig, freebusy=False):
    rig.grant_orchestrator()
    rig.write_config(SyncConfig(
        mode=Mode.SOLID_ONLY,
        freebusy_path="/calendar/freebusy" if freebusy else None,
    ))


def post_meeting(rig, uid, hours, organizer=BOB):
    request = MeetingRequest(organizer, (rig.owner,), Slot(span(*hours)), f"meet {uid}", uid)
    report = book_via_inbox(
        request,
        {organizer: rig.admin, rig.owner: rig.admin},
        stamped=at(0),
    )
    assert report.all_ok
    return report


def test_solid_only_consumes_and_marks(rig):
    solid_only_rig(rig)
    post_meeting(rig, "m-1", (10, 11))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK
    assert report.wrote_target
    assert report.notifications_consumed == 2  # organizer and participant copies

    target, body1, _ = read_target(rig)
    assert target.events["m-1"].interval == span(10, 11)

    owner = rig.store.resolve(owner_secret=rig.secret)
    assert all(n.processed for n in rig.store.list_inbox(owner))

    again = orch.sync_user(ALICE)
    assert not again.wrote_target
    assert again.notifications_consumed == 0
    _, body2, _ = read_target(rig)
    assert body2 == body1


def test_solid_only_ignores_foreign_notifications(rig):
    solid_only_rig(rig)
    owner = rig.store.resolve(owner_secret=rig.secret)
    rig.store.post_inbox(owner, b"free text, not a meeting", "text/plain")

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK
    assert report.notifications_consumed == 0
    notes = rig.store.list_inbox(owner)
    assert not notes[0].processed


def test_solid_only_sequence_update_wins(rig):
    solid_only_rig(rig)
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)

    post_meeting(rig, "m-2", (10, 11))
    orch.sync_user(ALICE)

    # an update with a higher sequence moves the meeting
    moved = Event(
        uid="m-2",
        interval=span(15, 16),
        summary="meet m-2 (moved)",
        version=EventVersion(sequence=1, stamped=at(1)),
        status=EventStatus.CONFIRMED,
    )
    from caldesk.linked import meeting_request_doc

    rig.admin.post_inbox(
        meeting_request_doc(moved, BOB, "http://caldesk.example/notify/m-2").encode(),
        "text/plain; charset=utf-8",
    )
    orch.sync_user(ALICE)
    target, _, _ = read_target(rig)
    assert target.events["m-2"].interval == span(15, 16)
    assert target.events["m-2"].version.sequence == 1


def test_solid_only_writes_freebusy_when_configured(rig):
    solid_only_rig(rig, freebusy=True)
    post_meeting(rig, "m-3", (9, 10))
    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)
    body, _, _ = rig.admin.get("/calendar/freebusy")
    fb = freebusy_from_doc(LinkedDoc.from_bytes(body))
    assert fb.busy == (span(9, 10),)


# --- solid-first hybrid ----------------------------------------------------------


def sfh_config(route, server=None, push_url=None, sources=()):
    return SyncConfig(
        mode=Mode.SOLID_FIRST_HYBRID,
        sources=sources,
        inbox_route=route,
        push_url=push_url,
    )


def test_sfh_separate_resource_route(rig):
    rig.grant_orchestrator()
    rig.write_config(sfh_config(InboxRoute.SEPARATE_RESOURCE))
    post_meeting(rig, "m-10", (10, 11))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK
    assert report.notifications_consumed == 2

    aux_body, _, _ = rig.admin.get("/calendar/frominbox")
    aux = from_linked(LinkedDoc.from_bytes(aux_body))
    assert "m-10" in aux.events

    target, _, _ = read_target(rig)
    assert target.events["m-10"].origin == "frominbox"


def test_sfh_ics_in_pod_route(rig):
    rig.grant_orchestrator()
    rig.write_config(sfh_config(InboxRoute.ICS_IN_POD))
    post_meeting(rig, "m-11", (10, 11))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)

    aux_body, _, ctype = rig.admin.get("/calendar/frominbox.ics")
    assert ctype.startswith("text/calendar")
    aux = parse_ics(aux_body.decode(), owner=ALICE)
    assert "m-11" in aux.events

    target, _, _ = read_target(rig)
    assert "m-11" in target.events


def test_sfh_remote_calendar_route(rig, extcal):
    service, server = extcal
    rig.grant_orchestrator()
    rig.write_config(sfh_config(
        InboxRoute.SEPARATE_REMOTE_CALENDAR,
        push_url=f"{server.base_url}/cal/push",
    ))
    post_meeting(rig, "m-12", (10, 11))

    orch = Orchestrator()
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    report = orch.sync_user(ALICE)
    assert report.status is RegStatus.OK

    # pushed outward to the external calendar
    assert "m-12" in service.get_calendar("push").events
    # and pulled straight back into the combined calendar on the same tick
    target, _, _ = read_target(rig)
    assert "m-12" in target.events
    assert target.events["m-12"].origin == "frominbox"

    # the push does not repeat once delivered
    orch.sync_user(ALICE)
    log_methods = [m for m, *_ in service.log("push")]
    assert log_methods.count("POST") == 1


def test_sfh_routes_converge_to_identical_targets(extcal):
    service, server = extcal
    service.put_calendar("ext", Calendar.of(ALICE, [ev("e1", (8, 9))]))
    source = ((f"{server.base_url}/cal/ext.ics", "ext"),)
    targets = {}
    for route in InboxRoute:
        rig = PodRig(ALICE)
        try:
            rig.grant_orchestrator()
            rig.write_config(SyncConfig(
                mode=Mode.SOLID_FIRST_HYBRID,
                sources=source,
                inbox_route=route,
                push_url=(
                    f"{server.base_url}/cal/push-{route.value}"
                    if route is InboxRoute.SEPARATE_REMOTE_CALENDAR
                    else None
                ),
            ))
            post_meeting(rig, "m-20", (10, 11))
            orch = Orchestrator()
            orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
            orch.sync_user(ALICE)
            orch.sync_user(ALICE)
            target, _, _ = read_target(rig)
            targets[route] = {
                uid: (e.interval, e.summary, e.version.sequence, e.version.stamped,
                      e.status, e.origin)
                for uid, e in target.events.items()
            }
        finally:
            rig.stop()
    assert targets[InboxRoute.SEPARATE_RESOURCE] == targets[InboxRoute.ICS_IN_POD]
    assert targets[InboxRoute.SEPARATE_RESOURCE] == targets[InboxRoute.SEPARATE_REMOTE_CALENDAR]
    assert set(targets[InboxRoute.SEPARATE_RESOURCE]) == {"e1", "m-20"}


# --- tick loop --------------------------------------------------------------------


def test_tick_respects_interval(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, []))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work", interval_seconds=300))

    clock = ManualClock(BASE)
    orch = Orchestrator(clock=clock)
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)

    assert orch.tick(wait=True) == [ALICE]  # never synced: due immediately
    assert orch.tick(wait=True) == []       # interval not yet elapsed
    clock.advance(299)
    assert orch.tick(wait=True) == []
    clock.advance(1)
    assert orch.tick(wait=True) == [ALICE]


def test_tick_skips_user_whose_sync_is_running(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, []))
    bob_rig = PodRig(BOB, "bob-secret")
    try:
        for r in (rig, bob_rig):
            r.grant_orchestrator()
            r.write_config(hybrid_config(server, "work"))
        orch = Orchestrator()
        orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
        orch.register(BOB, bob_rig.base_url, owner_secret="bob-secret")

        alice_lock = orch._user_lock(ALICE)
        assert alice_lock.acquire(blocking=False)
        try:
            started = orch.tick(wait=True)
            assert started == [BOB]
        finally:
            alice_lock.release()
    finally:
        bob_rig.stop()


def test_run_loop_counts_ticks(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, []))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work", interval_seconds=1))

    clock = ManualClock(BASE)
    orch = Orchestrator(clock=clock)
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)

    def ticks():
        for _ in range(3):
            yield None
            clock.advance(1)

    orch.run_loop(ticks())
    assert len(orch.report_log) == 3


def test_one_user_failure_does_not_block_others(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, []))
    bob_rig = PodRig(BOB, "bob-secret")
    try:
        rig.grant_orchestrator()
        rig.write_config(hybrid_config(server, "work"))
        bob_rig.grant_orchestrator()
        bob_rig.write_config(SyncConfig(
            mode=Mode.HYBRID_EXTERNAL_FIRST,
            sources=(("http://127.0.0.1:9/cal/dead.ics", "dead"),),
        ))
        orch = Orchestrator(timeout=0.5)
        orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
        orch.register(BOB, bob_rig.base_url, owner_secret="bob-secret")
        orch.tick(wait=True)
        assert orch.last_reports[ALICE].status is RegStatus.OK
        assert orch.last_reports[BOB].status is RegStatus.OK  # per-source isolation
        assert orch.last_reports[BOB].per_source == (("dead", "unreachable"),)
    finally:
        bob_rig.stop()


# --- HTTP face --------------------------------------------------------------------


def test_http_register_sync_status_deregister(rig, extcal):
    service, server = extcal
    service.put_calendar("work", Calendar.of(ALICE, [ev("w1", (9, 10))]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work"))

    orch = Orchestrator()
    http = serve_orchestrator(orch)
    try:
        base = http.base_url
        body = f"{ALICE.iri}\n{rig.base_url}\n{rig.secret}\n"
        response = requests.post(f"{base}/register", data=body.encode(), timeout=5)
        assert response.status_code == 201

        again = requests.post(f"{base}/register", data=body.encode(), timeout=5)
        assert again.status_code == 409

        bad = requests.post(
            f"{base}/register",
            data=f"{BOB.iri}\n{rig.base_url}\nwrong-secret\n".encode(),
            timeout=5,
        )
        assert bad.status_code == 403

        sync = requests.post(f"{base}/sync/{encode_user(ALICE)}", timeout=5)
        assert sync.status_code == 200
        assert "status Ok" in sync.text
        assert "wrote_target true" in sync.text

        status = requests.get(f"{base}/status", timeout=5)
        assert status.status_code == 200
        assert status.text.startswith(f"{ALICE.iri} Ok ")

        unknown = requests.post(f"{base}/sync/{encode_user(CAROL)}", timeout=5)
        assert unknown.status_code == 404

        done = requests.delete(f"{base}/register/{encode_user(ALICE)}", timeout=5)
        assert done.status_code == 200
        assert requests.get(f"{base}/status", timeout=5).text == ""

        gone = requests.delete(f"{base}/register/{encode_user(ALICE)}", timeout=5)
        assert gone.status_code == 404

        health = requests.get(f"{base}/health", timeout=5)
        assert health.text == "ok\n"
    finally:
        http.stop()


def test_storage_never_contains_event_content(tmp_path, rig, extcal):
    service, server = extcal
    sentinel = "XKCD-SENTINEL-SUMMARY"
    service.put_calendar("work", Calendar.of(ALICE, [
        ev("w1", (9, 10), summary=sentinel),
    ]))
    rig.grant_orchestrator()
    rig.write_config(hybrid_config(server, "work"))

    path = tmp_path / "registrations.txt"
    orch = Orchestrator(storage_path=path)
    orch.register(ALICE, rig.base_url, owner_secret=rig.secret)
    orch.sync_user(ALICE)
    orch.sync_user(ALICE)

    stored = path.read_text()
    assert sentinel not in stored
    assert "w1" not in stored
    target, _, _ = read_target(rig)
    assert target.events["w1"].summary == sentinel
