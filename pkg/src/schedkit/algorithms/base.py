"""Algorithm-side plugin contract.

A scheduling algorithm never mutates tasks or resources itself. It keeps a
queue of task ids and an ordered free list, and reports decisions through
three outputs wired by the scheduler context: task assignment, provision
requests and release requests.
"""

from __future__ import annotations

import abc
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, ClassVar, Iterable, Optional, Sequence

from ..errors import NotAttached
from ..model import Resource, TaskUnit

if TYPE_CHECKING:
    from ..context import SchedulerContext


@dataclass(frozen=True)
class AlgorithmDescriptor:
    name: str
    supports_provisioning: bool


AssignHandler = Callable[[str, str], bool]
ProvisionHandler = Callable[[str, int, str], Optional[str]]
ReleaseHandler = Callable[[Sequence[str]], bool]


class AlgorithmBase(abc.ABC):
    """Template for scheduling algorithms.

    Subclasses implement :meth:`schedule`, which the loop calls repeatedly
    while there are queued tasks and free resources. Everything else has a
    usable default: arrival-ordered queue, a free list that moves a resource
    to the back whenever one of its slots frees up, and no-op task callbacks.
    """

    name: ClassVar[str] = "base"
    supports_provisioning: ClassVar[bool] = False

    def __init__(self) -> None:
        self.scheduler: Optional[SchedulerContext] = None
        self.keep_running = False
        self.dispatched = 0
        self._queue: deque[str] = deque()
        self._free: list[Resource] = []
        self._assign: Optional[AssignHandler] = None
        self._provision: Optional[ProvisionHandler] = None
        self._release: Optional[ReleaseHandler] = None

    @property
    def descriptor(self) -> AlgorithmDescriptor:
        return AlgorithmDescriptor(self.name, self.supports_provisioning)

    def connect(
        self,
        assign: AssignHandler,
        provision: Optional[ProvisionHandler] = None,
        release: Optional[ReleaseHandler] = None,
    ) -> None:
        self._assign = assign
        self._provision = provision
        self._release = release

    def set_scheduler(self, scheduler: SchedulerContext) -> None:
        self.scheduler = scheduler

    def _require_scheduler(self) -> SchedulerContext:
        if self.scheduler is None:
            raise NotAttached(f"{self.name}: set_scheduler has not been called")
        return self.scheduler

    # lifecycle

    def start(self) -> None:
        self._require_scheduler()
        self.keep_running = True

    def stop(self) -> None:
        self.keep_running = False

    @abc.abstractmethod
    def schedule(self) -> None:
        """Make one round of scheduling decisions."""

    def can_schedule(self) -> bool:
        return self.tasks_in_queue > 0 and self.have_free_resources()

    def run_scheduling_loop(self) -> int:
        """Call :meth:`schedule` until the gate closes or a round makes no progress.

        Returns the number of assignments accepted by the context.
        """
        self._require_scheduler()
        total = 0
        while self.keep_running and self.can_schedule():
            before = self.dispatched
            self.schedule()
            if self.dispatched == before:
                break
            total += self.dispatched - before
        return total

    def provisioning_tick(self, now: float) -> None:
        """Evaluate provisioning; only provisioning-capable algorithms act."""

    # task queue

    @property
    def tasks_in_queue(self) -> int:
        return len(self._queue)

    @property
    def queue(self) -> tuple[str, ...]:
        return tuple(self._queue)

    def add_tasks(self, tasks: Iterable[TaskUnit | str]) -> None:
        self._require_scheduler()
        for task in tasks:
            task_id = task if isinstance(task, str) else task.task_id
            if task_id not in self._queue:
                self._queue.append(task_id)

    def get_next_task(self) -> Optional[str]:
        return self._queue.popleft() if self._queue else None

    def task_finished(self, task_id: str) -> None:
        self._require_scheduler()

    def task_failed(self, task_id: str) -> None:
        self._require_scheduler()

    def task_aborted(self, task_id: str) -> None:
        self._require_scheduler()
        if task_id in self._queue:
            self._queue.remove(task_id)

    def task_requeued(self, task_id: str) -> None:
        self._require_scheduler()
        if task_id not in self._queue:
            self._queue.append(task_id)

    # resources

    @property
    def free_list(self) -> tuple[str, ...]:
        return tuple(r.resource_id for r in self._free)

    def add_resources(self, resources: Iterable[Resource]) -> None:
        self._require_scheduler()
        for r in resources:
            self.add_free_resource(r)

    def add_free_resource(self, r: Resource) -> None:
        if r.is_connected and r.free_slots > 0:
            self.remove_free_resource(r)
            self._free.append(r)

    def remove_free_resource(self, r: Resource) -> None:
        self._free = [x for x in self._free if x.resource_id != r.resource_id]

    def have_free_resources(self) -> bool:
        return len(self._free) > 0

    def resource_disconnected(self, r: Resource) -> None:
        self._require_scheduler()
        self.remove_free_resource(r)

    def resource_reconnected(self, r: Resource) -> None:
        self._require_scheduler()
        self.add_free_resource(r)

    def provision_processed(self, request_id: str, granted: bool, resource_ids: Sequence[str]) -> None:
        self._require_scheduler()

    # outputs

    def start_schedule_task(self, free_list: Sequence[Resource], task_id: Optional[str]) -> bool:
        """Assign ``task_id`` to the first resource of ``free_list``."""
        if task_id is None or not free_list:
            return False
        if self._assign is None:
            raise NotAttached(f"{self.name}: no assignment handler connected")
        accepted = self._assign(task_id, free_list[0].resource_id)
        if accepted:
            self.dispatched += 1
        return accepted

    def request_resources(self, pool_id: str, count: int, application_id: str) -> Optional[str]:
        if self._provision is None:
            raise NotAttached(f"{self.name}: no provisioning handler connected")
        return self._provision(pool_id, count, application_id)

    def release_resources(self, resource_ids: Sequence[str]) -> bool:
        if self._release is None:
            raise NotAttached(f"{self.name}: no release handler connected")
        return self._release(list(resource_ids))

    def options(self) -> dict[str, Any]:
        return {}
