"""Exception types shared across the caldesk components."""

from __future__ import annotations


class CaldeskError(Exception):
    """Base class for all caldesk errors."""


# --- calendar model ---------------------------------------------------------


class MalformedIcs(CaldeskError):
    """ICS text violates the supported subset grammar."""


class UnsupportedFeature(CaldeskError):
    """ICS text uses a feature outside the supported subset (RRULE, TZID, ...)."""


class MalformedDoc(CaldeskError):
    """A statement document violates the grammar or misses mandatory fields."""


class OwnerMismatch(CaldeskError):
    """Two calendars with different owners were combined."""


# --- pod store --------------------------------------------------------------


class Unauthorized(CaldeskError):
    """No credential, or a revoked/unknown token. Maps to HTTP 401."""


class Forbidden(CaldeskError):
    """Credential valid but the ACL denies the operation. Maps to HTTP 403."""


class NotFound(CaldeskError):
    """Resource, notification, token, or calendar does not exist. HTTP 404."""


class PreconditionFailed(CaldeskError):
    """If-Match etag did not match the current resource. HTTP 412."""


# --- transport / external calendar ------------------------------------------


class Unreachable(CaldeskError):
    """A network peer could not be contacted."""


class StaleSequence(CaldeskError):
    """Incoming event sequence is not newer than the stored one. HTTP 409."""


# --- orchestrator -----------------------------------------------------------


class PodUnreachable(CaldeskError):
    """The user's pod could not be contacted during registration."""


class GrantRejected(CaldeskError):
    """The owner grant did not permit token issuance or the token is unusable."""


class AlreadyRegistered(CaldeskError):
    """A registration for this user already exists."""


class NotRegistered(CaldeskError):
    """No registration exists for this user."""


class ConfigMissing(CaldeskError):
    """The pod holds no readable sync configuration."""


class ConfigInvalid(CaldeskError):
    """The sync configuration violates one or more invariants."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# --- scheduling -------------------------------------------------------------


class WindowMismatch(CaldeskError):
    """A free/busy document does not cover the queried window."""


# --- harness ----------------------------------------------------------------


class CorruptState(CaldeskError):
    """Persisted state failed to load; ``path`` names the offending file."""

    def __init__(self, path, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = path
        self.detail = detail


class ScenarioParseError(CaldeskError):
    """A scenario file failed to parse; carries the 1-based line number."""

    def __init__(self, line_no: int, detail: str):
        super().__init__(f"line {line_no}: {detail}")
        self.line_no = line_no
        self.detail = detail
