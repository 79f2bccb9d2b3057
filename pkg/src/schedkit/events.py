"""Scheduling event taxonomy, a serial-delivery bus and the trace log."""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .errors import ClockRegression


class EventKind(str, Enum):
    ALGORITHM_SELECTED = "AlgorithmSelected"
    RESOURCE_DISCONNECTED = "ResourceDisconnected"
    RESOURCE_RECONNECTED = "ResourceReconnected"
    RESOURCE_PROVISION_REQUESTED = "ResourceProvisionRequested"
    RESOURCE_PROVISION_PROCESSED = "ResourceProvisionProcessed"
    RESOURCE_RELEASE_REQUESTED = "ResourceReleaseRequested"
    RESOURCE_POOLS_QUERY_REQUESTED = "ResourcePoolsQueryRequested"
    TASK_SUBMITTED = "TaskSubmitted"
    TASK_ASSIGNED = "TaskAssigned"
    TASK_STARTED = "TaskStarted"
    TASK_FINISHED = "TaskFinished"
    TASK_FAILED = "TaskFailed"
    TASK_ABORTED = "TaskAborted"
    TASK_REQUEUED = "TaskRequeued"


ALL_KINDS = frozenset(EventKind)
TASK_KINDS = frozenset(k for k in EventKind if k.value.startswith("Task"))
RESOURCE_KINDS = frozenset(k for k in EventKind if k.value.startswith("Resource"))


@dataclass(frozen=True)
class SchedulingEvent:
    """A timestamped event; ``payload`` must hold JSON-compatible values only."""

    kind: EventKind
    time: float
    payload: dict[str, Any] = field(default_factory=dict)

    def record(self, seq: int) -> dict[str, Any]:
        rec: dict[str, Any] = {"seq": seq, "time": self.time, "kind": self.kind.value}
        for key, value in self.payload.items():
            if key in rec:
                raise ValueError(f"payload key {key!r} collides with a record field")
            rec[key] = value
        return rec


Handler = Callable[[SchedulingEvent], None]


@dataclass(frozen=True)
class Subscription:
    subscriber_id: int
    kinds: frozenset


class EventBus:
    """Delivers events one at a time, in publication order.

    Events published from inside a handler are queued and delivered once the
    current delivery finishes, so every subscriber sees the same order as the
    trace. Subscribers are invoked in ascending ``subscriber_id``.
    """

    def __init__(self) -> None:
        self._subs: dict[int, tuple[Subscription, Handler]] = {}
        self._next_id = 0
        self._pending: deque[SchedulingEvent] = deque()
        self._delivering = False
        self.last_time: Optional[float] = None
        self.trace: list[dict[str, Any]] = []

    def subscribe(
        self,
        kinds: Iterable[EventKind],
        handler: Handler,
        subscriber_id: Optional[int] = None,
    ) -> Subscription:
        if subscriber_id is None:
            subscriber_id = self._next_id
        if subscriber_id in self._subs:
            raise ValueError(f"subscriber_id {subscriber_id} already in use")
        self._next_id = max(self._next_id, subscriber_id + 1)
        sub = Subscription(subscriber_id, frozenset(kinds))
        self._subs[subscriber_id] = (sub, handler)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        self._subs.pop(sub.subscriber_id, None)

    def publish(self, event: SchedulingEvent) -> None:
        if self.last_time is not None and event.time < self.last_time:
            raise ClockRegression(self.last_time, event.time)
        self.last_time = event.time
        self._pending.append(event)
        if self._delivering:
            return
        self._delivering = True
        try:
            while self._pending:
                self._deliver(self._pending.popleft())
        finally:
            self._delivering = False

    def _deliver(self, event: SchedulingEvent) -> None:
        self.trace.append(event.record(len(self.trace)))
        for sid in sorted(self._subs):
            sub, handler = self._subs[sid]
            if event.kind in sub.kinds:
                handler(event)

    def trace_lines(self) -> list[str]:
        return [json.dumps(rec, separators=(",", ":")) for rec in self.trace]

    def write_trace(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(line + "\n" for line in self.trace_lines()))
        return path

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for line in self.trace_lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


def read_trace(path) -> list[dict[str, Any]]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
