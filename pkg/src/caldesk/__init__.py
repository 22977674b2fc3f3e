"""caldesk: pod-backed calendar synchronization and scheduling toolkit.

Components: the calendar data model with deterministic merge, a simulated
personal data store with ACLs and an inbox, a mock external calendar
service, the long-living sync orchestrator, joint-availability scheduling,
and a CLI with a scripted scenario runner.
"""

from .model import (
    AgentId,
    Calendar,
    ChangeSet,
    Event,
    EventStatus,
    EventVersion,
    FreeBusy,
    Instant,
    Interval,
    coalesce,
    merge,
    project_freebusy,
)

__all__ = [
    "AgentId",
    "Calendar",
    "ChangeSet",
    "Event",
    "EventStatus",
    "EventVersion",
    "FreeBusy",
    "Instant",
    "Interval",
    "coalesce",
    "merge",
    "project_freebusy",
]

__version__ = "0.1.0"
