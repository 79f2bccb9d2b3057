"""Runtime side of the plugin contract.

The :class:`SchedulerContext` owns the application store and the resource
table, applies every task lifecycle change, publishes the matching event and
then forwards it to the attached algorithm. Algorithms only ever see task ids
and emit requests through their outputs; the context decides whether a
request is applied or rejected.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence

from .algorithms.base import AlgorithmBase
from .errors import (
    AlreadyDisconnected,
    AlreadyRunning,
    DuplicateTaskId,
    IllegalTransition,
    NotAttached,
    NotDisconnected,
    NotRunning,
    SchedkitError,
    StaleAssignment,
    UnknownResource,
    UnknownTask,
)
from .events import EventBus, EventKind, SchedulingEvent
from .model import (
    ACTIVE_STATES,
    FailureCause,
    QosContract,
    Resource,
    TaskState,
    TaskUnit,
    requeue,
    transition,
)

if TYPE_CHECKING:
    from .provisioning import ResourceProvisioner

log = logging.getLogger("schedkit")

_OUTCOME_EVENTS = {
    TaskState.FINISHED: EventKind.TASK_FINISHED,
    TaskState.FAILED: EventKind.TASK_FAILED,
    TaskState.ABORTED: EventKind.TASK_ABORTED,
}


@dataclass
class ApplicationStore:
    tasks: dict[str, TaskUnit] = field(default_factory=dict)
    qos: dict[str, QosContract] = field(default_factory=dict)

    def get(self, task_id: str) -> TaskUnit:
        try:
            return self.tasks[task_id]
        except KeyError:
            raise UnknownTask(task_id) from None

    def put(self, task: TaskUnit) -> None:
        self.tasks[task.task_id] = task

    def queued(self) -> list[TaskUnit]:
        queued = [t for t in self.tasks.values() if t.state is TaskState.QUEUED]
        return sorted(queued, key=lambda t: (t.submit_time, t.task_id))

    def assigned_to(self, resource_id: str) -> list[TaskUnit]:
        tasks = [
            t
            for t in self.tasks.values()
            if t.assigned_resource == resource_id and t.state in ACTIVE_STATES
        ]
        return sorted(tasks, key=lambda t: (t.scheduled_time, t.task_id))


class SchedulerContext:
    """Serializes store mutation, event publication and algorithm callbacks.

    Parameters
    ----------
    bus : EventBus, optional
        Event bus to publish on; a fresh one is created by default.
    max_retries : int
        A failed task is requeued only while its attempt number is below this.
    include_transfer_in_mean : bool, optional
        Measure execution from dispatch instead of from start when updating
        the per-application mean. Defaults to the attached algorithm's
        preference.
    """

    def __init__(
        self,
        bus: Optional[EventBus] = None,
        max_retries: int = 3,
        include_transfer_in_mean: Optional[bool] = None,
    ) -> None:
        self.bus = bus if bus is not None else EventBus()
        self.store = ApplicationStore()
        self.resources: dict[str, Resource] = {}
        self.resource_history: dict[str, Resource] = {}
        self.algorithm: Optional[AlgorithmBase] = None
        self.provisioner: Optional[ResourceProvisioner] = None
        self.running = False
        self.supports_provisioning = False
        self.max_retries = max_retries
        self._include_transfer_override = include_transfer_in_mean
        self.include_transfer_in_mean = bool(include_transfer_in_mean)
        self.errors: list[dict[str, Any]] = []
        self.now = 0.0

    # wiring

    def set_algorithm(self, algorithm: AlgorithmBase) -> None:
        if self.running:
            raise AlreadyRunning("cannot replace the algorithm while running")
        algorithm.connect(
            assign=self._assign_output,
            provision=self._provision_output,
            release=self._release_output,
        )
        algorithm.set_scheduler(self)
        self.algorithm = algorithm
        self.supports_provisioning = algorithm.supports_provisioning
        if self._include_transfer_override is None:
            self.include_transfer_in_mean = bool(getattr(algorithm, "include_transfer_in_mean", False))

    def attach_provisioner(self, provisioner: ResourceProvisioner) -> None:
        self.provisioner = provisioner

    def _publish(self, kind: EventKind, now: float, **payload: Any) -> None:
        self.now = now
        self.bus.publish(SchedulingEvent(kind, now, payload))

    def _require_algorithm(self) -> AlgorithmBase:
        if self.algorithm is None:
            raise NotAttached("no scheduling algorithm attached")
        return self.algorithm

    # lifecycle

    def start(self, now: float = 0.0) -> None:
        algorithm = self._require_algorithm()
        if self.running:
            raise AlreadyRunning("context already running")
        self._publish(
            EventKind.ALGORITHM_SELECTED,
            now,
            algorithm=algorithm.name,
            supports_provisioning=algorithm.supports_provisioning,
        )
        self.running = True
        algorithm.start()
        algorithm.add_resources(self._sorted_resources())
        algorithm.add_tasks([t.task_id for t in self.store.queued()])

    def stop(self, now: Optional[float] = None) -> None:
        if not self.running:
            raise NotRunning("context is not running")
        if now is not None:
            self.now = now
        self.running = False
        self._require_algorithm().stop()

    def _sorted_resources(self) -> list[Resource]:
        return [self.resources[k] for k in sorted(self.resources)]

    def pump(self) -> int:
        """Run the algorithm's scheduling loop until it parks."""
        if not self.running or self.algorithm is None:
            return 0
        return self.algorithm.run_scheduling_loop()

    def tick(self, now: float) -> None:
        """Let a provisioning-capable algorithm re-evaluate its capacity."""
        self.now = now
        if self.running and self.supports_provisioning and self.algorithm is not None:
            self.algorithm.provisioning_tick(now)

    def step(self, now: float, state_changed: bool = True) -> None:
        self.now = now
        self.pump()
        if state_changed:
            self.tick(now)
            self.pump()

    # tasks

    def submit(self, tasks: Sequence[TaskUnit], qos: QosContract, now: float) -> None:
        if not tasks:
            return
        seen = set()
        for t in tasks:
            if t.task_id in self.store.tasks or t.task_id in seen:
                raise DuplicateTaskId(t.task_id)
            if t.application_id != qos.application_id:
                raise ValueError(f"{t.task_id} belongs to {t.application_id}, not {qos.application_id}")
            seen.add(t.task_id)
        contract = self.store.qos.setdefault(qos.application_id, qos)
        already = sum(1 for t in self.store.tasks.values() if t.application_id == qos.application_id)
        if already + len(tasks) > contract.total_work:
            raise ValueError(
                f"{qos.application_id}: {already + len(tasks)} tasks exceed total_work={contract.total_work}"
            )
        stored = []
        for t in tasks:
            t = replace(t, state=TaskState.QUEUED, submit_time=now)
            self.store.put(t)
            stored.append(t)
            self._publish(
                EventKind.TASK_SUBMITTED,
                now,
                task_id=t.task_id,
                application_id=t.application_id,
                attempt=t.attempt,
            )
        if self.running:
            self._require_algorithm().add_tasks([t.task_id for t in stored])

    def on_assign(self, task_id: str, resource_id: str, now: float) -> None:
        task = self.store.get(task_id)
        resource = self.resources.get(resource_id)
        if task.state is not TaskState.QUEUED:
            raise StaleAssignment(f"{task_id} is {task.state.value}, not Queued")
        if resource is None or not resource.is_connected or resource.free_slots <= 0:
            if self.algorithm is not None and self.running:
                self.algorithm.task_requeued(task_id)
            raise StaleAssignment(f"{resource_id} cannot take {task_id}")
        task = replace(transition(task, TaskState.SCHEDULED, now), assigned_resource=resource_id)
        self.store.put(task)
        resource.free_slots -= 1
        if resource.free_slots == 0 and self.algorithm is not None:
            self.algorithm.remove_free_resource(resource)
        self.store.qos[task.application_id].scheduled_tasks += 1
        self._publish(
            EventKind.TASK_ASSIGNED,
            now,
            task_id=task_id,
            resource_id=resource_id,
            pool_id=resource.pool_id,
            attempt=task.attempt,
        )

    def start_task(self, task_id: str, now: float) -> None:
        """Mark a dispatched task as executing once its input has arrived."""
        task = transition(self.store.get(task_id), TaskState.RUNNING, now)
        self.store.put(task)
        self._publish(
            EventKind.TASK_STARTED,
            now,
            task_id=task_id,
            resource_id=task.assigned_resource,
            attempt=task.attempt,
        )

    def on_task_outcome(
        self,
        task_id: str,
        outcome: TaskState,
        now: float,
        cause: FailureCause = FailureCause.EXECUTION_ERROR,
    ) -> None:
        task = self.store.get(task_id)
        if task.state not in ACTIVE_STATES:
            raise IllegalTransition(f"{task_id} is {task.state.value}; outcome {outcome.value} not allowed")
        if outcome not in _OUTCOME_EVENTS:
            raise IllegalTransition(f"{outcome.value} is not a task outcome")
        task = self._close_attempt(task, outcome, now)
        self._free_slot(task.assigned_resource)
        self._announce_outcome(task, now, cause)
        if outcome is TaskState.FAILED:
            self._retry(task, now, cause.value)

    def _close_attempt(self, task: TaskUnit, outcome: TaskState, now: float) -> TaskUnit:
        task = transition(task, outcome, now)
        self.store.put(task)
        qos = self.store.qos[task.application_id]
        if outcome is TaskState.FINISHED:
            qos.work_completed += 1
            began = task.scheduled_time if self.include_transfer_in_mean else task.start_time
            qos.record_execution(now - began)
        else:
            qos.scheduled_tasks -= 1
        return task

    def _free_slot(self, resource_id: Optional[str]) -> None:
        resource = self.resources.get(resource_id) if resource_id else None
        if resource is None or not resource.is_connected:
            return
        resource.free_slots += 1
        if self.algorithm is not None:
            self.algorithm.add_free_resource(resource)

    def _announce_outcome(self, task: TaskUnit, now: float, cause: FailureCause) -> None:
        payload: dict[str, Any] = {
            "task_id": task.task_id,
            "resource_id": task.assigned_resource,
            "attempt": task.attempt,
        }
        if task.state is TaskState.FAILED:
            payload["failure_cause"] = cause.value
        self._publish(_OUTCOME_EVENTS[task.state], now, **payload)
        if self.algorithm is None:
            return
        if task.state is TaskState.FINISHED:
            self.algorithm.task_finished(task.task_id)
        elif task.state is TaskState.FAILED:
            self.algorithm.task_failed(task.task_id)
        else:
            self.algorithm.task_aborted(task.task_id)

    def _retry(self, task: TaskUnit, now: float, cause: str) -> bool:
        if task.attempt >= self.max_retries:
            return False
        self._requeue(task, now, cause)
        return True

    def _requeue(self, task: TaskUnit, now: float, cause: str) -> None:
        task = requeue(task, now)
        self.store.put(task)
        self._publish(
            EventKind.TASK_REQUEUED,
            now,
            task_id=task.task_id,
            attempt=task.attempt,
            cause=cause,
        )
        if self.algorithm is not None and self.running:
            self.algorithm.task_requeued(task.task_id)

    def abort_task(self, task_id: str, now: float) -> None:
        """User abort; Queued tasks are dropped from the algorithm's queue."""
        task = self.store.get(task_id)
        if task.state in ACTIVE_STATES:
            self.on_task_outcome(task_id, TaskState.ABORTED, now)
            return
        task = transition(task, TaskState.ABORTED, now)
        self.store.put(task)
        self._announce_outcome(task, now, FailureCause.USER_ABORT_CASCADE)

    def requeue_task(self, task_id: str, now: float) -> None:
        """User-initiated requeue of a failed or aborted task."""
        self._requeue(self.store.get(task_id), now, "UserAction")

    # resources

    def add_resources(self, resources: Iterable[Resource], now: Optional[float] = None) -> None:
        if now is not None:
            self.now = now
        added = []
        for r in resources:
            if r.resource_id in self.resource_history:
                raise ValueError(f"resource {r.resource_id} already registered")
            self.resources[r.resource_id] = r
            self.resource_history[r.resource_id] = r
            added.append(r)
        if self.running and self.algorithm is not None:
            self.algorithm.add_resources(added)

    def remove_resource(self, resource_id: str, now: float) -> Resource:
        try:
            resource = self.resources.pop(resource_id)
        except KeyError:
            raise UnknownResource(resource_id) from None
        if self.algorithm is not None:
            self.algorithm.remove_free_resource(resource)
        return resource

    def _resource(self, resource_id: str) -> Resource:
        try:
            return self.resources[resource_id]
        except KeyError:
            raise UnknownResource(resource_id) from None

    def on_resource_disconnected(self, resource_id: str, now: float) -> None:
        resource = self._resource(resource_id)
        if not resource.is_connected:
            raise AlreadyDisconnected(resource_id)
        victims = self.store.assigned_to(resource_id)
        resource.is_connected = False
        if self.algorithm is not None:
            self.algorithm.resource_disconnected(resource)
        self._publish(
            EventKind.RESOURCE_DISCONNECTED,
            now,
            resource_id=resource_id,
            assigned_tasks=[t.task_id for t in victims],
        )
        failed = []
        for task in victims:
            task = self._close_attempt(task, TaskState.FAILED, now)
            resource.free_slots += 1
            self._announce_outcome(task, now, FailureCause.RESOURCE_DISCONNECT)
            failed.append(task)
        for task in failed:
            self._retry(task, now, FailureCause.RESOURCE_DISCONNECT.value)

    def on_resource_reconnected(self, resource_id: str, now: float) -> None:
        resource = self._resource(resource_id)
        if resource.is_connected:
            raise NotDisconnected(resource_id)
        resource.is_connected = True
        resource.free_slots = resource.total_slots
        if self.algorithm is not None:
            self.algorithm.resource_reconnected(resource)
        self._publish(EventKind.RESOURCE_RECONNECTED, now, resource_id=resource_id)

    def connected_slots(self) -> int:
        return sum(r.total_slots for r in self.resources.values() if r.is_connected)

    def idle_provisioned(self) -> list[Resource]:
        idle = [
            r
            for r in self.resources.values()
            if r.provisioned_at is not None and r.is_connected and r.is_idle
        ]
        return sorted(idle, key=lambda r: (r.provisioned_at, r.resource_id))

    def default_pool_id(self) -> Optional[str]:
        if self.provisioner is None:
            return None
        return self.provisioner.default_pool_id()

    # algorithm outputs

    def _assign_output(self, task_id: str, resource_id: str) -> bool:
        try:
            self.on_assign(task_id, resource_id, self.now)
        except SchedkitError as err:
            self.record_error(err, "assign_task")
            return False
        return True

    def _provision_output(self, pool_id: str, count: int, application_id: str) -> Optional[str]:
        if self.provisioner is None:
            self.record_error(NotAttached("no provisioner attached"), "provision_resources")
            return None
        try:
            return self.provisioner.request_provision(pool_id, count, application_id, self.now)
        except (SchedkitError, ValueError) as err:
            self.record_error(err, "provision_resources")
            return None

    def _release_output(self, resource_ids: Sequence[str]) -> bool:
        if self.provisioner is None:
            self.record_error(NotAttached("no provisioner attached"), "release_resources")
            return False
        try:
            self.provisioner.request_release(resource_ids, self.now)
        except SchedkitError as err:
            self.record_error(err, "release_resources")
            return False
        return True

    def notify_provision_processed(self, request_id: str, granted: bool, resource_ids: Sequence[str]) -> None:
        if self.algorithm is not None and self.running:
            self.algorithm.provision_processed(request_id, granted, resource_ids)

    # error log

    def record_error(self, err: BaseException, operation: Optional[str] = None, now: Optional[float] = None) -> dict:
        try:
            rec: dict[str, Any] = {
                "time": self.now if now is None else now,
                "operation": operation,
                "error": type(err).__name__,
                "message": str(err),
            }
            for attr in ("last_time", "event_time"):
                if hasattr(err, attr):
                    rec[attr] = getattr(err, attr)
            self.errors.append(rec)
            log.warning("%s at t=%s in %s: %s", rec["error"], rec["time"], operation, err)
            return rec
        except Exception:  # the error sink must never raise
            return {}

    def write_errors(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(json.dumps(r, separators=(",", ":")) + "\n" for r in self.errors))
        return path
