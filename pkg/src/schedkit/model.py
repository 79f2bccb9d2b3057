"""Domain types, the task lifecycle state machine and timing metrics."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .errors import IllegalTransition


@dataclass(frozen=True)
class Spread:
    """A constant value when ``high`` is None, otherwise uniform on [low, high]."""

    low: float = 0.0
    high: Optional[float] = None

    def __post_init__(self) -> None:
        if self.low < 0 or (self.high is not None and self.high < self.low):
            raise ValueError(f"invalid range ({self.low}, {self.high})")

    @property
    def is_zero(self) -> bool:
        return self.low == 0 and (self.high is None or self.high == 0)

    @property
    def mean(self) -> float:
        return self.low if self.high is None else (self.low + self.high) / 2

    def scaled(self, factor: float) -> "Spread":
        return Spread(self.low * factor, None if self.high is None else self.high * factor)

    def sample(self, rng: random.Random) -> float:
        if self.high is None or self.high == self.low:
            return self.low
        return rng.uniform(self.low, self.high)


class TaskState(str, Enum):
    QUEUED = "Queued"
    SCHEDULED = "Scheduled"
    RUNNING = "Running"
    FINISHED = "Finished"
    FAILED = "Failed"
    ABORTED = "Aborted"

    @property
    def is_terminal(self) -> bool:
        return self in TERMINAL_STATES


TERMINAL_STATES = frozenset({TaskState.FINISHED, TaskState.FAILED, TaskState.ABORTED})
ACTIVE_STATES = frozenset({TaskState.SCHEDULED, TaskState.RUNNING})

LEGAL_TRANSITIONS = frozenset(
    {
        (TaskState.QUEUED, TaskState.SCHEDULED),
        (TaskState.SCHEDULED, TaskState.RUNNING),
        (TaskState.RUNNING, TaskState.FINISHED),
        (TaskState.RUNNING, TaskState.FAILED),
        (TaskState.SCHEDULED, TaskState.FAILED),
        (TaskState.QUEUED, TaskState.ABORTED),
        (TaskState.SCHEDULED, TaskState.ABORTED),
        (TaskState.RUNNING, TaskState.ABORTED),
    }
)


class FailureCause(str, Enum):
    RESOURCE_DISCONNECT = "ResourceDisconnect"
    EXECUTION_ERROR = "ExecutionError"
    USER_ABORT_CASCADE = "UserAbortCascade"


@dataclass(frozen=True)
class TaskUnit:
    """One schedulable work unit.

    Instances are immutable; lifecycle operations return updated copies.
    ``compute_demand`` is seconds of computation on a reference slot and
    ``input_data_size`` is in megabytes.
    """

    task_id: str
    application_id: str
    compute_demand: float
    input_data_size: float = 0.0
    state: TaskState = TaskState.QUEUED
    attempt: int = 0
    submit_time: float = 0.0
    scheduled_time: Optional[float] = None
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    assigned_resource: Optional[str] = None

    def __post_init__(self) -> None:
        if self.compute_demand < 0:
            raise ValueError("compute_demand cannot be negative")
        if self.input_data_size < 0:
            raise ValueError("input_data_size cannot be negative")


@dataclass
class Resource:
    """An execution endpoint with a fixed number of slots."""

    resource_id: str
    total_slots: int
    pool_id: str
    free_slots: Optional[int] = None
    is_connected: bool = True
    speed_factor: float = 1.0
    provisioned_at: Optional[float] = None
    released_at: Optional[float] = None

    def __post_init__(self) -> None:
        if self.total_slots < 1:
            raise ValueError("total_slots must be positive")
        if self.speed_factor <= 0:
            raise ValueError("speed_factor must be positive")
        if self.free_slots is None:
            self.free_slots = self.total_slots
        if not 0 <= self.free_slots <= self.total_slots:
            raise ValueError("free_slots out of range")

    @property
    def busy_slots(self) -> int:
        return self.total_slots - self.free_slots

    @property
    def is_idle(self) -> bool:
        return self.free_slots == self.total_slots


@dataclass
class QosContract:
    """Deadline bookkeeping for one application.

    ``scheduled_tasks`` counts tasks currently dispatched (Scheduled or
    Running) plus finished ones, so ``total_work - scheduled_tasks`` is the
    number of tasks not yet dispatched. The mean execution time falls back to
    ``prior_mean`` until the first attempt finishes.
    """

    application_id: str
    total_work: int
    deadline: float = math.inf
    scheduled_tasks: int = 0
    work_completed: int = 0
    prior_mean: float = 60.0
    execution_time_sum: float = 0.0
    finished_attempts: int = 0

    def __post_init__(self) -> None:
        if self.total_work < 1:
            raise ValueError("total_work must be positive")

    @property
    def average_task_execution_time(self) -> float:
        if self.finished_attempts == 0:
            return self.prior_mean
        return self.execution_time_sum / self.finished_attempts

    def time_remaining(self, now: float) -> float:
        return max(0.0, self.deadline - now)

    def record_execution(self, seconds: float) -> None:
        self.execution_time_sum += seconds
        self.finished_attempts += 1


@dataclass(frozen=True)
class SchedulingData:
    task_id: str
    queue_time: float
    execution_time: float
    final_state: TaskState
    attempt: int = 0


_STAMP_FIELD = {
    TaskState.SCHEDULED: "scheduled_time",
    TaskState.RUNNING: "start_time",
    TaskState.FINISHED: "end_time",
    TaskState.FAILED: "end_time",
    TaskState.ABORTED: "end_time",
}


def transition(task: TaskUnit, target: TaskState, now: float) -> TaskUnit:
    """Move ``task`` along one legal lifecycle edge, stamping ``now``."""
    if (task.state, target) not in LEGAL_TRANSITIONS:
        raise IllegalTransition(f"{task.task_id}: {task.state.value} -> {target.value}")
    return replace(task, state=target, **{_STAMP_FIELD[target]: now})


def requeue(task: TaskUnit, now: float) -> TaskUnit:
    """Return a fresh Queued attempt of a failed or aborted task.

    The requeued attempt counts as a new arrival at ``now``.
    """
    if task.state not in (TaskState.FAILED, TaskState.ABORTED):
        raise IllegalTransition(f"{task.task_id}: cannot requeue a {task.state.value} task")
    return replace(
        task,
        state=TaskState.QUEUED,
        attempt=task.attempt + 1,
        submit_time=now,
        scheduled_time=None,
        start_time=None,
        end_time=None,
        assigned_resource=None,
    )


def finalize_metrics(task: TaskUnit) -> SchedulingData:
    """Derive queue and execution time of the task's final attempt.

    Intervals whose endpoints were never stamped count as zero.
    """
    if not task.state.is_terminal:
        raise ValueError(f"{task.task_id} is not in a terminal state")
    queue_time = 0.0
    if task.scheduled_time is not None:
        queue_time = task.scheduled_time - task.submit_time
    execution_time = 0.0
    if task.start_time is not None and task.end_time is not None:
        execution_time = task.end_time - task.start_time
    return SchedulingData(
        task_id=task.task_id,
        queue_time=queue_time,
        execution_time=execution_time,
        final_state=task.state,
        attempt=task.attempt,
    )
