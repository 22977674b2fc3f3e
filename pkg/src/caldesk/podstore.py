"""Simulated personal data store: addressable resources behind an ACL,
bearer tokens, and an append-only notification inbox.

One ``PodStore`` holds one user's data. Access is deny-by-default: the
owner (authenticated by a per-pod secret) may do anything, every other
agent needs a matching ACL entry. State can persist to a directory tree
so a pod server survives restarts.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import os
import re
import secrets as secrets_mod
import tempfile
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable
from urllib.parse import quote, unquote

import requests

from .errors import (
    CorruptState,
    Forbidden,
    NotFound,
    PreconditionFailed,
    Unauthorized,
    Unreachable,
)
from .httpbase import BaseHandler, Clock, RunningServer, start_server
from .model import AgentId, Instant

PROFILE_PATH = "/profile"
SETTINGS_PATH = "/settings/orchestrator"
COMBINED_PATH = "/calendar/combined"
FREEBUSY_PATH = "/calendar/freebusy"
INBOX_PATH = "/inbox/"

ANONYMOUS_SENDER = AgentId("http://caldesk.example/agent/anonymous")

_PATH_SEGMENT = re.compile(r"^[A-Za-z0-9._~!$&'()*+,;=:@%-]+$")


class AccessMode(enum.Enum):
    READ = "Read"
    WRITE = "Write"
    APPEND = "Append"
    CONTROL = "Control"

    @property
    def letter(self) -> str:
        return self.value[0]

    @classmethod
    def from_letter(cls, letter: str) -> "AccessMode":
        for mode in cls:
            if mode.letter == letter:
                return mode
        raise ValueError(f"unknown access mode letter {letter!r}")


def normalize_path(path: str) -> str:
    """Canonical pod path: '/'-rooted, no empty or dot segments.

    A single trailing slash is preserved (it names a container).
    """
    if not path.startswith("/"):
        raise ValueError(f"path must be '/'-rooted: {path!r}")
    trailing = path.endswith("/") and path != "/"
    segments = [seg for seg in path.split("/") if seg != ""]
    for seg in segments:
        if seg in (".", "..") or not _PATH_SEGMENT.match(seg):
            raise ValueError(f"bad path segment {seg!r} in {path!r}")
    normalized = "/" + "/".join(segments)
    if trailing:
        normalized += "/"
    return normalized


@dataclass(frozen=True)
class Resource:
    path: str
    body: bytes
    content_type: str
    etag: str


@dataclass(frozen=True)
class AclEntry:
    """Grants ``modes`` on every path at or under ``path`` to ``agent`` ('*' for anyone)."""

    path: str
    agent: str
    modes: frozenset[AccessMode]

    def __post_init__(self):
        object.__setattr__(self, "path", normalize_path(self.path))
        object.__setattr__(self, "modes", frozenset(self.modes))
        if not self.modes:
            raise ValueError("ACL entry needs at least one mode")
        if self.agent != "*":
            AgentId(self.agent)  # validates

    def to_line(self) -> str:
        letters = "".join(sorted(mode.letter for mode in self.modes))
        return f"{self.path} {self.agent} {letters}"

    @classmethod
    def from_line(cls, line: str) -> "AclEntry":
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad ACL line: {line!r}")
        path, agent, letters = parts
        return cls(path, agent, frozenset(AccessMode.from_letter(l) for l in letters))


@dataclass(frozen=True)
class Token:
    value: str
    agent: AgentId
    issued: Instant
    revoked: bool = False


@dataclass(frozen=True)
class Notification:
    id: str
    sender: AgentId
    received: Instant
    body: bytes
    content_type: str
    processed: bool = False


def write_atomic(path: Path, data: bytes) -> None:
    """Replace ``path`` with ``data`` so readers never observe a torn file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _prefix_matches(entry_path: str, path: str) -> bool:
    base = entry_path.rstrip("/") or ""
    target = path.rstrip("/")
    return target == base or target.startswith(base + "/") or entry_path == "/"


def check_access(acl: Iterable[AclEntry], owner: AgentId, agent: AgentId | None,
                 path: str, mode: AccessMode) -> bool:
    """Deny-by-default ACL decision. Pure function of its arguments.

    The owner holds every mode implicitly. For other agents the entries
    whose agent matches (exactly or '*') and whose path is a prefix of the
    target are considered; among those, only the most specific path wins.
    """
    if agent is not None and agent == owner:
        return True
    path = normalize_path(path)
    candidates = [
        entry
        for entry in acl
        if (entry.agent == "*" or (agent is not None and entry.agent == agent.iri))
        and _prefix_matches(entry.path, path)
    ]
    if not candidates:
        return False
    longest = max(len(entry.path.rstrip("/")) for entry in candidates)
    return any(
        mode in entry.modes
        for entry in candidates
        if len(entry.path.rstrip("/")) == longest
    )


class _Owner:
    """Sentinel credential: the request is authenticated as the pod owner."""


OWNER = _Owner()


class PodStore:
    """One user's pod: resources, ACL table, tokens, inbox, persistence."""

    def __init__(self, owner: AgentId, owner_secret: str, *, root: Path | str | None = None,
                 clock: Clock | None = None):
        self.owner = owner
        self._secret = owner_secret
        self.root = Path(root) if root is not None else None
        self.clock = clock or Clock()
        self._lock = threading.RLock()
        self._resources: dict[str, Resource] = {}
        self._acl: list[AclEntry] = [AclEntry(PROFILE_PATH, "*", frozenset({AccessMode.READ}))]
        self._tokens: dict[str, Token] = {}
        self._notifications: dict[str, Notification] = {}
        self._counter = 0
        self.request_log: list[tuple[str, str, Instant]] = []
        self._store_resource(PROFILE_PATH, owner.iri.encode("utf-8") + b"\n",
                             "text/plain; charset=utf-8")
        if self.root is not None:
            self._save_all()

    # --- credentials ---------------------------------------------------------

    def resolve(self, *, token: str | None = None, owner_secret: str | None = None):
        """Map credentials to an agent: OWNER, an AgentId, or None (anonymous)."""
        if owner_secret is not None:
            if not hmac.compare_digest(owner_secret, self._secret):
                raise Unauthorized("bad owner secret")
            return OWNER
        if token is not None:
            with self._lock:
                record = self._tokens.get(token)
            if record is None or record.revoked:
                raise Unauthorized("unknown or revoked token")
            return record.agent
        return None

    def _authorize(self, principal, path: str, mode: AccessMode) -> None:
        if principal is OWNER:
            return
        with self._lock:
            allowed = check_access(self._acl, self.owner, principal, path, mode)
        if not allowed:
            if principal is None:
                raise Unauthorized(f"{mode.value} on {path} requires credentials")
            raise Forbidden(f"{principal.iri} may not {mode.value} {path}")

    # --- resources -----------------------------------------------------------

    def get_resource(self, principal, path: str) -> Resource:
        path = normalize_path(path)
        self._authorize(principal, path, AccessMode.READ)
        if path.startswith(INBOX_PATH) or path == INBOX_PATH:
            raise NotFound(f"{path} is not a plain resource")
        resource = self._resources.get(path)
        if resource is None:
            raise NotFound(path)
        return resource

    def put_resource(self, principal, path: str, body: bytes, content_type: str,
                     if_match: str | None = None) -> str:
        path = normalize_path(path)
        if path.startswith(INBOX_PATH) or path == INBOX_PATH or path == INBOX_PATH.rstrip("/"):
            raise Forbidden("the inbox is append-only; use POST")
        self._authorize(principal, path, AccessMode.WRITE)
        with self._lock:
            current = self._resources.get(path)
            if if_match is not None and (current is None or current.etag != if_match):
                raise PreconditionFailed(path)
            resource = self._store_resource(path, body, content_type)
            self._save_resource(resource)
        return resource.etag

    def _store_resource(self, path: str, body: bytes, content_type: str) -> Resource:
        resource = Resource(path, bytes(body), content_type,
                            hashlib.sha256(body).hexdigest())
        self._resources[path] = resource
        return resource

    def resource_exists(self, path: str) -> bool:
        return normalize_path(path) in self._resources

    # --- inbox ---------------------------------------------------------------

    def post_inbox(self, principal, body: bytes, content_type: str) -> str:
        self._authorize(principal, INBOX_PATH, AccessMode.APPEND)
        if principal is OWNER:
            sender = self.owner
        elif principal is None:
            sender = ANONYMOUS_SENDER
        else:
            sender = principal
        with self._lock:
            self._counter += 1
            nid = f"n-{self._counter:04d}"
            notification = Notification(
                id=nid,
                sender=sender,
                received=self.clock.now(),
                body=bytes(body),
                content_type=content_type,
            )
            self._notifications[nid] = notification
            self._save_inbox(notification)
        return nid

    def list_inbox(self, principal) -> list[Notification]:
        self._authorize(principal, INBOX_PATH, AccessMode.READ)
        with self._lock:
            return sorted(self._notifications.values(), key=lambda n: (n.received, n.id))

    def get_notification(self, principal, nid: str) -> Notification:
        self._authorize(principal, INBOX_PATH, AccessMode.READ)
        with self._lock:
            notification = self._notifications.get(nid)
        if notification is None:
            raise NotFound(f"/inbox/{nid}")
        return notification

    def mark_processed(self, principal, nid: str) -> None:
        self._authorize(principal, INBOX_PATH, AccessMode.WRITE)
        with self._lock:
            notification = self._notifications.get(nid)
            if notification is None:
                raise NotFound(f"/inbox/{nid}")
            if not notification.processed:
                self._notifications[nid] = replace(notification, processed=True)
                self._save_inbox(self._notifications[nid])

    # --- tokens and ACL (owner only) ------------------------------------------

    def issue_token(self, owner_secret: str, agent: AgentId) -> Token:
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            value = secrets_mod.token_urlsafe(32)
            token = Token(value=value, agent=agent, issued=self.clock.now())
            self._tokens[value] = token
            self._save_tokens()
        return token

    def revoke_token(self, owner_secret: str, value: str) -> None:
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            token = self._tokens.get(value)
            if token is None:
                raise NotFound("no such token")
            self._tokens[value] = replace(token, revoked=True)
            self._save_tokens()

    def set_acl(self, owner_secret: str, entries: Iterable[AclEntry]) -> None:
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            self._acl = list(entries)
            self._save_acl()

    def get_acl(self, owner_secret: str) -> list[AclEntry]:
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            return list(self._acl)

    def add_acl_entry(self, owner_secret: str, entry: AclEntry) -> None:
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            self._acl.append(entry)
            self._save_acl()

    def remove_agent_acl(self, owner_secret: str, agent_iri: str) -> None:
        """Drop every ACL entry naming ``agent_iri``."""
        self.resolve(owner_secret=owner_secret)
        with self._lock:
            self._acl = [entry for entry in self._acl if entry.agent != agent_iri]
            self._save_acl()

    def log_request(self, method: str, path: str) -> None:
        with self._lock:
            self.request_log.append((method, path, self.clock.now()))

    # --- persistence -----------------------------------------------------------

    def _save_all(self) -> None:
        self._save_meta()
        self._save_acl()
        self._save_tokens()
        for resource in self._resources.values():
            self._save_resource(resource)
        for notification in self._notifications.values():
            self._save_inbox(notification)

    def _write_atomic(self, path: Path, data: bytes) -> None:
        write_atomic(path, data)

    def _save_meta(self) -> None:
        if self.root is None:
            return
        text = f"{self.owner.iri}\n{self._secret}\n{self._counter}\n"
        self._write_atomic(self.root / "meta.txt", text.encode("utf-8"))

    def _save_acl(self) -> None:
        if self.root is None:
            return
        text = "".join(entry.to_line() + "\n" for entry in self._acl)
        self._write_atomic(self.root / "acl.txt", text.encode("utf-8"))

    def _save_tokens(self) -> None:
        if self.root is None:
            return
        lines = [
            f"{t.value} {t.agent.iri} {t.issued.iso()} {1 if t.revoked else 0}\n"
            for t in self._tokens.values()
        ]
        self._write_atomic(self.root / "tokens.txt", "".join(lines).encode("utf-8"))

    def _save_resource(self, resource: Resource) -> None:
        if self.root is None:
            return
        name = quote(resource.path, safe="")
        self._write_atomic(self.root / "resources" / name, resource.body)
        types = "".join(
            f"{quote(r.path, safe='')} {r.content_type}\n" for r in self._resources.values()
        )
        self._write_atomic(self.root / "types.txt", types.encode("utf-8"))

    def _save_inbox(self, notification: Notification) -> None:
        if self.root is None:
            return
        self._write_atomic(self.root / "inbox" / notification.id, notification.body)
        with self._lock:
            self._save_meta()  # counter moved
            lines = [
                f"{n.id} {n.sender.iri} {n.received.iso()} "
                f"{1 if n.processed else 0} {quote(n.content_type, safe='')}\n"
                for n in sorted(self._notifications.values(), key=lambda n: n.id)
            ]
        self._write_atomic(self.root / "inbox.txt", "".join(lines).encode("utf-8"))

    @classmethod
    def load(cls, root: Path | str, *, clock: Clock | None = None) -> "PodStore":
        """Restore a pod from its directory tree; raises CorruptState on damage."""
        root = Path(root)
        meta_path = root / "meta.txt"
        try:
            meta_lines = meta_path.read_text("utf-8").splitlines()
        except OSError as exc:
            raise CorruptState(meta_path, f"cannot read: {exc}") from exc
        if len(meta_lines) != 3:
            raise CorruptState(meta_path, "expected 3 lines (owner, secret, counter)")
        try:
            owner = AgentId(meta_lines[0])
            counter = int(meta_lines[2])
        except ValueError as exc:
            raise CorruptState(meta_path, str(exc)) from exc
        store = cls.__new__(cls)
        store.owner = owner
        store._secret = meta_lines[1]
        store.root = root
        store.clock = clock or Clock()
        store._lock = threading.RLock()
        store._resources = {}
        store._acl = []
        store._tokens = {}
        store._notifications = {}
        store._counter = counter
        store.request_log = []

        acl_path = root / "acl.txt"
        if acl_path.exists():
            for line in acl_path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                try:
                    store._acl.append(AclEntry.from_line(line))
                except ValueError as exc:
                    raise CorruptState(acl_path, str(exc)) from exc

        tokens_path = root / "tokens.txt"
        if tokens_path.exists():
            for line in tokens_path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 4 or parts[3] not in ("0", "1"):
                    raise CorruptState(tokens_path, f"bad token line: {line!r}")
                try:
                    store._tokens[parts[0]] = Token(
                        value=parts[0],
                        agent=AgentId(parts[1]),
                        issued=Instant.from_iso(parts[2]),
                        revoked=parts[3] == "1",
                    )
                except ValueError as exc:
                    raise CorruptState(tokens_path, str(exc)) from exc

        types_path = root / "types.txt"
        content_types: dict[str, str] = {}
        if types_path.exists():
            for line in types_path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                name, _, ctype = line.partition(" ")
                content_types[unquote(name)] = ctype
        resources_dir = root / "resources"
        if resources_dir.exists():
            for entry in resources_dir.iterdir():
                path = unquote(entry.name)
                try:
                    normalize_path(path)
                except ValueError as exc:
                    raise CorruptState(entry, str(exc)) from exc
                body = entry.read_bytes()
                store._store_resource(
                    path, body, content_types.get(path, "application/octet-stream")
                )

        inbox_index = root / "inbox.txt"
        if inbox_index.exists():
            for line in inbox_index.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 5 or parts[3] not in ("0", "1"):
                    raise CorruptState(inbox_index, f"bad inbox line: {line!r}")
                body_path = root / "inbox" / parts[0]
                try:
                    body = body_path.read_bytes()
                except OSError as exc:
                    raise CorruptState(body_path, f"cannot read: {exc}") from exc
                try:
                    store._notifications[parts[0]] = Notification(
                        id=parts[0],
                        sender=AgentId(parts[1]),
                        received=Instant.from_iso(parts[2]),
                        body=body,
                        content_type=unquote(parts[4]),
                        processed=parts[3] == "1",
                    )
                except ValueError as exc:
                    raise CorruptState(inbox_index, str(exc)) from exc
        return store


# --- HTTP layer ---------------------------------------------------------------


def make_pod_handler(store: PodStore) -> type[BaseHandler]:
    """Build a request handler class bound to one pod store."""

    class PodHandler(BaseHandler):
        def _principal(self):
            secret = self.headers.get("X-Owner-Secret")
            return store.resolve(token=self.bearer_token(), owner_secret=secret)

        def _guarded(self, action) -> None:
            store.log_request(self.command, self.path)
            try:
                action()
            except Unauthorized as exc:
                self.send_text(401, f"unauthorized: {exc}\n")
            except Forbidden as exc:
                self.send_text(403, f"forbidden: {exc}\n")
            except NotFound as exc:
                self.send_text(404, f"not found: {exc}\n")
            except PreconditionFailed as exc:
                self.send_text(412, f"precondition failed: {exc}\n")
            except ValueError as exc:
                self.send_text(400, f"bad request: {exc}\n")

        def do_GET(self):
            self._guarded(self._get)

        def do_PUT(self):
            self._guarded(self._put)

        def do_POST(self):
            self._guarded(self._post)

        def do_DELETE(self):
            self._guarded(self._delete)

        def _get(self):
            if self.path == "/_health":
                self.send_text(200, "ok\n")
                return
            if self.path == "/_admin/acl":
                entries = store.get_acl(self._require_secret())
                self.send_text(200, "".join(e.to_line() + "\n" for e in entries))
                return
            principal = self._principal()
            if self.path == INBOX_PATH:
                notifications = store.list_inbox(principal)
                self.send_text(200, "".join(n.id + "\n" for n in notifications))
                return
            if self.path.startswith(INBOX_PATH):
                rest = self.path[len(INBOX_PATH):]
                if rest.endswith("/processed"):
                    nid = rest[: -len("/processed")]
                    notification = store.get_notification(principal, nid)
                    self.send_text(200, "true\n" if notification.processed else "false\n")
                    return
                notification = store.get_notification(principal, rest)
                self.send_body(
                    200,
                    notification.body,
                    notification.content_type,
                    extra_headers={
                        "X-Sender": notification.sender.iri,
                        "X-Received": notification.received.iso(),
                        "X-Processed": "true" if notification.processed else "false",
                    },
                )
                return
            resource = store.get_resource(principal, self.path)
            self.send_body(200, resource.body, resource.content_type,
                           extra_headers={"ETag": resource.etag})

        def _put(self):
            if self.path == "/_admin/acl":
                body = self.read_body().decode("utf-8")
                entries = []
                for line in body.splitlines():
                    if line.strip():
                        entries.append(AclEntry.from_line(line))
                store.set_acl(self._require_secret(), entries)
                self.send_text(200, "ok\n")
                return
            principal = self._principal()
            if self.path.startswith(INBOX_PATH) and self.path.endswith("/processed"):
                nid = self.path[len(INBOX_PATH): -len("/processed")]
                self.read_body()
                store.mark_processed(principal, nid)
                self.send_text(200, "ok\n")
                return
            existed = store.resource_exists(self.path)
            etag = store.put_resource(
                principal,
                self.path,
                self.read_body(),
                self.headers.get("Content-Type", "application/octet-stream"),
                if_match=self.headers.get("If-Match"),
            )
            self.send_text(200 if existed else 201, "ok\n", extra_headers={"ETag": etag})

        def _post(self):
            if self.path == "/_admin/tokens":
                agent = AgentId(self.read_body().decode("utf-8").strip())
                token = store.issue_token(self._require_secret(), agent)
                self.send_text(201, token.value + "\n")
                return
            if self.path == INBOX_PATH:
                principal = self._principal()
                nid = store.post_inbox(
                    principal,
                    self.read_body(),
                    self.headers.get("Content-Type", "application/octet-stream"),
                )
                self.send_text(201, nid + "\n", extra_headers={"Location": f"/inbox/{nid}"})
                return
            raise NotFound(self.path)

        def _delete(self):
            prefix = "/_admin/tokens/"
            if self.path.startswith(prefix):
                store.revoke_token(self._require_secret(), self.path[len(prefix):])
                self.send_text(200, "ok\n")
                return
            raise Forbidden("resources cannot be deleted")

        def _require_secret(self) -> str:
            secret = self.headers.get("X-Owner-Secret")
            if secret is None:
                raise Unauthorized("owner secret required")
            return secret

    return PodHandler


def serve_pod(store: PodStore, host: str = "127.0.0.1", port: int = 0) -> RunningServer:
    return start_server(make_pod_handler(store), host, port)


class PodClient:
    """HTTP client for a pod, authenticated by bearer token or owner secret."""

    def __init__(self, base_url: str, *, token: str | None = None,
                 owner_secret: str | None = None, timeout: float = 10.0,
                 user_agent: str = "caldesk-client/0.1"):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.owner_secret = owner_secret
        self.timeout = timeout
        self.user_agent = user_agent
        self._session = requests.Session()

    def _headers(self, extra: dict[str, str] | None = None) -> dict[str, str]:
        headers = {"User-Agent": self.user_agent}
        if self.token is not None:
            headers["Authorization"] = f"Bearer {self.token}"
        if self.owner_secret is not None:
            headers["X-Owner-Secret"] = self.owner_secret
        headers.update(extra or {})
        return headers

    def _request(self, method: str, path: str, **kwargs) -> requests.Response:
        url = self.base_url + path
        try:
            response = self._session.request(method, url, timeout=self.timeout, **kwargs)
        except requests.RequestException as exc:
            raise Unreachable(f"{method} {url}: {exc}") from exc
        if response.status_code < 400:
            return response
        detail = response.text.strip()
        if response.status_code == 401:
            raise Unauthorized(detail)
        if response.status_code == 403:
            raise Forbidden(detail)
        if response.status_code == 404:
            raise NotFound(detail)
        if response.status_code == 412:
            raise PreconditionFailed(detail)
        raise Unreachable(f"{method} {url}: HTTP {response.status_code}: {detail}")

    def get(self, path: str) -> tuple[bytes, str, str]:
        """Fetch a resource; returns (body, etag, content_type)."""
        response = self._request("GET", path, headers=self._headers())
        return response.content, response.headers.get("ETag", ""), \
            response.headers.get("Content-Type", "")

    def put(self, path: str, body: bytes, content_type: str,
            if_match: str | None = None) -> str:
        extra = {"Content-Type": content_type}
        if if_match is not None:
            extra["If-Match"] = if_match
        response = self._request("PUT", path, headers=self._headers(extra), data=body)
        return response.headers.get("ETag", "")

    def post_inbox(self, body: bytes, content_type: str) -> str:
        response = self._request(
            "POST", INBOX_PATH, headers=self._headers({"Content-Type": content_type}), data=body
        )
        return response.text.strip()

    def list_inbox(self) -> list[str]:
        response = self._request("GET", INBOX_PATH, headers=self._headers())
        return [line for line in response.text.splitlines() if line]

    def get_notification(self, nid: str) -> tuple[bytes, str, str]:
        """Returns (body, content_type, sender_iri)."""
        response = self._request("GET", f"{INBOX_PATH}{nid}", headers=self._headers())
        return response.content, response.headers.get("Content-Type", ""), \
            response.headers.get("X-Sender", "")

    def is_processed(self, nid: str) -> bool:
        response = self._request("GET", f"{INBOX_PATH}{nid}/processed", headers=self._headers())
        return response.text.strip() == "true"

    def mark_processed(self, nid: str) -> None:
        self._request("PUT", f"{INBOX_PATH}{nid}/processed", headers=self._headers(), data=b"true")

    def issue_token(self, agent: AgentId) -> str:
        response = self._request(
            "POST", "/_admin/tokens", headers=self._headers(), data=agent.iri.encode("utf-8")
        )
        return response.text.strip()

    def revoke_token(self, value: str) -> None:
        self._request("DELETE", f"/_admin/tokens/{value}", headers=self._headers())

    def put_acl(self, entries: Iterable[AclEntry]) -> None:
        body = "".join(entry.to_line() + "\n" for entry in entries)
        self._request("PUT", "/_admin/acl", headers=self._headers(), data=body.encode("utf-8"))

    def get_acl(self) -> list[AclEntry]:
        response = self._request("GET", "/_admin/acl", headers=self._headers())
        return [AclEntry.from_line(line) for line in response.text.splitlines() if line.strip()]

    def health(self) -> bool:
        try:
            self._request("GET", "/_health", headers=self._headers())
            return True
        except Unreachable:
            return False
