"""The ``caldesk`` command line: serve the components, register and sync
users against a running orchestrator, query joint availability, book
meetings, run scenario scripts, and inspect pod resources.

Exit codes: 0 success, 2 usage, 3 permission denied, 4 network failure,
1 anything else.
"""

from __future__ import annotations

import argparse
import signal
import sys
import threading
from pathlib import Path
from urllib.parse import quote, urlsplit

import requests

from .errors import (
    CaldeskError,
    CorruptState,
    Forbidden,
    GrantRejected,
    PodUnreachable,
    Unauthorized,
    Unreachable,
)
from .extcal import ExternalCalendarService, serve_extcal
from .httpbase import Clock
from .model import AgentId, Instant, Interval
from .orchestrator import Orchestrator, serve_orchestrator
from .podstore import PodClient, PodStore, serve_pod
from .scenario import ScenarioRunner, load_scenario, parse_duration, resolve_scenario
from .scheduling import (
    MeetingRequest,
    Slot,
    book_via_external,
    book_via_inbox,
    fetch_freebusy,
    joint_availability,
)


def _kv(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ValueError(f"expected KEY=VALUE, got {text!r}")
    return key, value


def _resource_url(url: str) -> tuple[str, str]:
    """Split an absolute resource URL into (pod base, resource path)."""
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc or not parts.path:
        raise ValueError(f"need an absolute http(s) resource url, got {url!r}")
    return f"{parts.scheme}://{parts.netloc}", parts.path


def _serve_until_signal(banner: str, stop: callable) -> int:
    done = threading.Event()
    for signum in (signal.SIGINT, signal.SIGTERM):
        signal.signal(signum, lambda *_: done.set())
    # handlers first: the banner tells callers the process is ready to stop
    print(banner, flush=True)
    try:
        done.wait()
    finally:
        stop()
    return 0


# --- pod / extcal / orch servers ---------------------------------------------


def _cmd_pod_serve(args) -> int:
    root = Path(args.root) if args.root else None
    if root is not None and (root / "meta.txt").exists():
        store = PodStore.load(root)
    else:
        if not args.owner or not args.secret:
            print("error: a new pod needs --owner and --secret", file=sys.stderr)
            return 2
        store = PodStore(AgentId(args.owner), args.secret, root=root)
    server = serve_pod(store, args.host, args.port)
    return _serve_until_signal(
        f"pod {store.owner.iri} serving on {server.base_url}", server.stop
    )


def _cmd_extcal_serve(args) -> int:
    server = serve_extcal(ExternalCalendarService(), args.host, args.port)
    return _serve_until_signal(
        f"external calendar service on {server.base_url}", server.stop
    )


def _cmd_orch_serve(args) -> int:
    orch = Orchestrator(storage_path=args.storage)
    server = serve_orchestrator(orch, args.host, args.port)
    stopping = threading.Event()

    def ticker() -> None:
        while not stopping.wait(args.poll):
            try:
                orch.tick()
            except Exception as exc:  # keep the loop alive; syncs report their own errors
                print(f"tick failed: {exc}", file=sys.stderr)

    thread = threading.Thread(target=ticker, name="orch-ticker", daemon=True)
    thread.start()

    def stop() -> None:
        stopping.set()
        thread.join(timeout=5)
        server.stop()

    where = f" (storage {args.storage})" if args.storage else ""
    return _serve_until_signal(f"orchestrator{where} serving on {server.base_url}", stop)


# --- orchestrator client commands --------------------------------------------


def _orch_call(method: str, url: str, body: bytes = b"") -> tuple[int, str]:
    try:
        response = requests.request(method, url, data=body, timeout=10)
    except requests.RequestException as exc:
        raise Unreachable(f"{method} {url}: {exc}") from exc
    return response.status_code, response.text


def _cmd_orch_register(args) -> int:
    body = f"{args.user}\n{args.pod}\n{args.secret}\n".encode("utf-8")
    status, text = _orch_call("POST", args.orchestrator.rstrip("/") + "/register", body)
    print(text.rstrip("\n"))
    if status == 201:
        return 0
    if status == 403:
        return 3
    if status == 502:
        return 4
    return 1


def _cmd_orch_sync(args) -> int:
    url = args.orchestrator.rstrip("/") + "/sync/" + quote(args.user, safe="")
    status, text = _orch_call("POST", url)
    print(text.rstrip("\n"))
    return 0 if status == 200 else 1


# --- scheduling commands ------------------------------------------------------


def _cmd_schedule_find(args) -> int:
    tokens: list[str | None]
    if not args.token:
        tokens = [None] * len(args.freebusy)
    elif len(args.token) == 1:
        tokens = [args.token[0]] * len(args.freebusy)
    elif len(args.token) == len(args.freebusy):
        tokens = list(args.token)
    else:
        print("error: give one --token for all urls, or one per url", file=sys.stderr)
        return 2
    freebusies = []
    for url, token in zip(args.freebusy, tokens):
        base, path = _resource_url(url)
        freebusies.append(fetch_freebusy(PodClient(base, token=token), path))
    window = Interval(args.window_start, args.window_end)
    slots = joint_availability(freebusies, window, args.duration, args.granularity)
    for slot in slots:
        print(f"{slot.interval.start.iso()} {slot.interval.end.iso()}")
    return 0


def _booking_exit(report) -> int:
    for attempt in report.attempts:
        verdict = "ok" if attempt.ok else "FAIL"
        print(f"{attempt.participant.iri} {verdict} {attempt.detail}")
    if report.all_ok:
        return 0
    details = [a.detail for a in report.attempts if not a.ok]
    if any(d.startswith(("Unauthorized", "Forbidden")) for d in details):
        return 3
    if any(d.startswith("Unreachable") for d in details):
        return 4
    return 1


def _cmd_schedule_book(args) -> int:
    start = args.start
    slot = Slot(Interval(start, start.plus(args.duration)))
    participants = tuple(AgentId(iri) for iri, _ in args.participant)
    request = MeetingRequest(AgentId(args.organizer), participants, slot,
                             args.summary, args.uid)
    stamped = Clock().now() if args.stamp is None else args.stamp
    if args.via == "external":
        urls = {AgentId(iri): url for iri, url in args.participant}
        report = book_via_external(request, urls, stamped=stamped)
    else:
        tokens = dict(args.token or [])
        inboxes = {}
        for iri, pod_url in args.participant:
            inboxes[AgentId(iri)] = PodClient(pod_url.rstrip("/"), token=tokens.get(iri))
        report = book_via_inbox(request, inboxes, stamped=stamped)
    return _booking_exit(report)


# --- scenario / inspect -------------------------------------------------------


def _cmd_scenario_run(args) -> int:
    path = resolve_scenario(args.scenario)
    runner = ScenarioRunner(load_scenario(path))
    return 0 if runner.run(print) else 1


def _cmd_inspect(args) -> int:
    base, path = _resource_url(args.pod.rstrip("/") + args.path)
    client = PodClient(base, token=args.token, owner_secret=args.secret)
    body, etag, content_type = client.get(path)
    sys.stdout.buffer.write(body)
    sys.stdout.buffer.flush()
    print(f"etag {etag}\ncontent-type {content_type}", file=sys.stderr)
    return 0


# --- parser -------------------------------------------------------------------


def _instant(text: str) -> Instant:
    return Instant.from_iso(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caldesk",
        description="Pod-backed calendar synchronization and scheduling.",
    )
    top = parser.add_subparsers(dest="command", required=True)

    pod = top.add_parser("pod", help="personal data store").add_subparsers(
        dest="subcommand", required=True)
    pod_serve = pod.add_parser("serve", help="serve a pod, creating or reloading state")
    pod_serve.add_argument("--root", help="state directory; loaded if it holds a pod")
    pod_serve.add_argument("--owner", help="owner agent IRI for a new pod")
    pod_serve.add_argument("--secret", help="owner secret for a new pod")
    pod_serve.add_argument("--host", default="127.0.0.1")
    pod_serve.add_argument("--port", type=int, default=0)
    pod_serve.set_defaults(func=_cmd_pod_serve)

    extcal = top.add_parser("extcal", help="external calendar service").add_subparsers(
        dest="subcommand", required=True)
    extcal_serve = extcal.add_parser("serve", help="serve an in-memory calendar service")
    extcal_serve.add_argument("--host", default="127.0.0.1")
    extcal_serve.add_argument("--port", type=int, default=0)
    extcal_serve.set_defaults(func=_cmd_extcal_serve)

    orch = top.add_parser("orch", help="sync orchestrator").add_subparsers(
        dest="subcommand", required=True)
    orch_serve = orch.add_parser("serve", help="serve the orchestrator and tick continuously")
    orch_serve.add_argument("--storage", help="registration storage file")
    orch_serve.add_argument("--host", default="127.0.0.1")
    orch_serve.add_argument("--port", type=int, default=0)
    orch_serve.add_argument("--poll", type=float, default=1.0,
                            help="seconds between tick attempts")
    orch_serve.set_defaults(func=_cmd_orch_serve)
    orch_register = orch.add_parser("register", help="register a user with a running orchestrator")
    orch_register.add_argument("--orchestrator", required=True, help="orchestrator base url")
    orch_register.add_argument("--user", required=True, help="user agent IRI")
    orch_register.add_argument("--pod", required=True, help="pod base url")
    orch_register.add_argument("--secret", required=True, help="pod owner secret")
    orch_register.set_defaults(func=_cmd_orch_register)
    orch_sync = orch.add_parser("sync", help="trigger one sync and print the report")
    orch_sync.add_argument("--orchestrator", required=True, help="orchestrator base url")
    orch_sync.add_argument("--user", required=True, help="user agent IRI")
    orch_sync.set_defaults(func=_cmd_orch_sync)

    schedule = top.add_parser("schedule", help="availability and booking").add_subparsers(
        dest="subcommand", required=True)
    find = schedule.add_parser("find", help="joint availability from free/busy resources")
    find.add_argument("--freebusy", action="append", required=True,
                      help="absolute url of a free/busy resource (repeatable)")
    find.add_argument("--token", action="append",
                      help="bearer token: one for all urls, or one per url")
    find.add_argument("--window-start", type=_instant, required=True)
    find.add_argument("--window-end", type=_instant, required=True)
    find.add_argument("--duration", type=parse_duration, required=True, help="e.g. 1h")
    find.add_argument("--granularity", type=parse_duration, required=True, help="e.g. 30m")
    find.set_defaults(func=_cmd_schedule_find)
    book = schedule.add_parser("book", help="book a meeting for every participant")
    book.add_argument("--via", choices=("external", "inbox"), required=True)
    book.add_argument("--uid", required=True)
    book.add_argument("--start", type=_instant, required=True)
    book.add_argument("--duration", type=parse_duration, required=True)
    book.add_argument("--summary", required=True)
    book.add_argument("--organizer", required=True, help="organizer agent IRI")
    book.add_argument("--participant", action="append", type=_kv, required=True,
                      metavar="IRI=URL",
                      help="external: IRI=calendar push url; inbox: IRI=pod base url")
    book.add_argument("--token", action="append", type=_kv, metavar="IRI=TOKEN",
                      help="bearer token for a participant's pod (inbox bookings)")
    book.add_argument("--stamp", type=_instant, help="creation stamp (defaults to now)")
    book.set_defaults(func=_cmd_schedule_book)

    scenario = top.add_parser("scenario", help="scripted end-to-end runs").add_subparsers(
        dest="subcommand", required=True)
    run = scenario.add_parser("run", help="run a shipped scenario by name, or a .scn file")
    run.add_argument("scenario", help="scenario name or path")
    run.set_defaults(func=_cmd_scenario_run)

    inspect = top.add_parser("inspect", help="dump one pod resource to stdout")
    inspect.add_argument("--pod", required=True, help="pod base url")
    inspect.add_argument("--path", required=True, help="resource path, e.g. /calendar/combined")
    credentials = inspect.add_mutually_exclusive_group()
    credentials.add_argument("--secret", help="owner secret")
    credentials.add_argument("--token", help="bearer token")
    inspect.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (Unauthorized, Forbidden, GrantRejected) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (Unreachable, PodUnreachable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CorruptState as exc:
        print(f"error: corrupt state in {exc.path}: {exc.detail}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CaldeskError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
