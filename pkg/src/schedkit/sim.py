"""Deterministic discrete-event harness.

The simulator owns a virtual clock and an event heap. Every popped event is
handed to the scheduler context, after which the algorithm's scheduling loop
is pumped and, for task state changes, its provisioning tick runs. Ties at
one timestamp are broken by a fixed priority and then by insertion order,
which makes a run a pure function of (config, seed).
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from .algorithms import create_algorithm
from .config import ExperimentConfig
from .context import SchedulerContext
from .errors import SchedkitError
from .events import EventBus, EventKind, SchedulingEvent
from .model import Resource, TaskState, TaskUnit
from .provisioning import ResourcePoolSpec, ResourceProvisioner
from .report import ExperimentReport, build_report
from .workload import DISCONNECT, FaultEntry, generate_workload

log = logging.getLogger("schedkit.sim")

PRIO_FINISH = 0
PRIO_START = 1
PRIO_POOL = 2
PRIO_FAULT = 3
PRIO_ARRIVAL = 4
PRIO_TIMER = 5


@dataclass(frozen=True)
class ServiceTime:
    transfer: float
    compute: float

    @property
    def total(self) -> float:
        return self.transfer + self.compute


def service_time(task: TaskUnit, resource: Resource, pool: ResourcePoolSpec) -> ServiceTime:
    """Input transfer at the pool's bandwidth, then compute scaled by slot speed."""
    transfer = 0.0
    if task.input_data_size > 0 and not math.isinf(pool.bandwidth):
        transfer = task.input_data_size / pool.bandwidth
    return ServiceTime(transfer, task.compute_demand / resource.speed_factor)


class Simulation:
    def __init__(self, config: ExperimentConfig, seed: Optional[int] = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        algo_cfg = config.algorithm
        self.bus = EventBus()
        self.context = SchedulerContext(
            self.bus,
            max_retries=algo_cfg.max_retries,
            include_transfer_in_mean=algo_cfg.include_transfer_in_mean,
        )
        self.algorithm = create_algorithm(algo_cfg.name, **algo_cfg.algorithm_options())
        self.context.set_algorithm(self.algorithm)
        self.provisioner = ResourceProvisioner(config.pools, self.context, self.seed)
        self.tasks, self.qos = generate_workload(config.workload, self.seed, algo_cfg.prior_mean)
        self.clock = 0.0
        self.done = False
        self._heap: list[tuple[float, int, int, Callable[..., bool], tuple]] = []
        self._seq = itertools.count()
        self._unsubmitted = 0
        self.bus.subscribe({EventKind.TASK_ASSIGNED}, self._on_assigned)
        self.bus.subscribe({EventKind.RESOURCE_PROVISION_REQUESTED}, self._on_provision_requested)

    def schedule_at(self, time: float, priority: int, action: Callable[..., bool], *args: Any) -> None:
        if time < self.clock:
            raise ValueError(f"cannot schedule at {time} before the clock ({self.clock})")
        heapq.heappush(self._heap, (time, priority, next(self._seq), action, args))

    # bus listeners: only push heap entries, never publish

    def _on_assigned(self, event: SchedulingEvent) -> None:
        task = self.context.store.get(event.payload["task_id"])
        resource = self.context.resources[event.payload["resource_id"]]
        st = service_time(task, resource, self.provisioner.pools[resource.pool_id])
        self.schedule_at(event.time + st.transfer, PRIO_START, self._start, task.task_id, task.attempt, st.compute)

    def _on_provision_requested(self, event: SchedulingEvent) -> None:
        self.schedule_at(event.payload["matures_at"], PRIO_POOL, self._pool_tick)

    # heap actions; each returns whether task state changed

    def _current(self, task_id: str, attempt: int, state: TaskState) -> bool:
        task = self.context.store.get(task_id)
        return task.attempt == attempt and task.state is state

    def _start(self, task_id: str, attempt: int, compute: float) -> bool:
        if self.done or not self._current(task_id, attempt, TaskState.SCHEDULED):
            return False
        self.context.start_task(task_id, self.clock)
        self.schedule_at(self.clock + compute, PRIO_FINISH, self._finish, task_id, attempt)
        return True

    def _finish(self, task_id: str, attempt: int) -> bool:
        if self.done or not self._current(task_id, attempt, TaskState.RUNNING):
            return False
        self.context.on_task_outcome(task_id, TaskState.FINISHED, self.clock)
        return True

    def _pool_tick(self) -> bool:
        return bool(self.provisioner.pool_tick(self.clock))

    def apply_fault(self, entry: FaultEntry) -> bool:
        if self.done:
            return False
        try:
            if entry.action == DISCONNECT:
                self.context.on_resource_disconnected(entry.resource_id, self.clock)
            else:
                self.context.on_resource_reconnected(entry.resource_id, self.clock)
        except SchedkitError as err:
            self.context.record_error(err, f"fault:{entry.action}", self.clock)
            return False
        return True

    def _arrive(self, task: TaskUnit) -> bool:
        self._unsubmitted -= 1
        self.context.submit([task], self.qos, self.clock)
        return True

    def _timer(self) -> bool:
        if self.done:
            return False
        self.context.tick(self.clock)
        self.schedule_at(self.clock + self.algorithm.tick_period, PRIO_TIMER, self._timer)
        return False

    # driver

    def _all_terminal(self) -> bool:
        if self._unsubmitted:
            return False
        return all(t.state.is_terminal for t in self.context.store.tasks.values())

    def _finish_run(self) -> None:
        self.done = True
        self.context.stop(self.clock)
        self.provisioner.release_all(self.clock)

    def run(self) -> "Simulation":
        ctx = self.context
        self.provisioner.create_local_resources()
        ctx.start(0.0)
        initial = [t for t in self.tasks if t.submit_time == 0.0]
        later = [t for t in self.tasks if t.submit_time > 0.0]
        self._unsubmitted = len(later)
        ctx.submit(initial, self.qos, 0.0)
        for t in later:
            self.schedule_at(t.submit_time, PRIO_ARRIVAL, self._arrive, t)
        for entry in self.config.faults:
            self.schedule_at(entry.time, PRIO_FAULT, self.apply_fault, entry)
        if ctx.supports_provisioning:
            self.schedule_at(self.algorithm.tick_period, PRIO_TIMER, self._timer)
        ctx.step(0.0, state_changed=True)
        if self._all_terminal():
            self._finish_run()
        while self._heap:
            time, _, _, action, args = self._heap[0]
            if time > self.config.horizon:
                log.warning("horizon %s reached with events pending", self.config.horizon)
                break
            heapq.heappop(self._heap)
            if self.done and action != self._pool_tick:
                continue
            self.clock = time
            changed = action(*args)
            if self.done:
                self.provisioner.release_all(self.clock)
                continue
            ctx.step(self.clock, state_changed=changed)
            if self._all_terminal():
                self._finish_run()
        if not self.done and ctx.running:
            self._finish_run()
        self.provisioner.release_all(self.clock)
        return self

    def report(self, trace_path: Optional[str] = None) -> ExperimentReport:
        return build_report(self, trace_path)


def run_experiment(config: ExperimentConfig, seed: Optional[int] = None, out_dir=None) -> ExperimentReport:
    """Run one experiment; with ``out_dir`` also write trace, report, metrics and errors."""
    sim = Simulation(config, seed).run()
    if out_dir is None:
        return sim.report()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = sim.bus.write_trace(out / "trace.jsonl")
    sim.context.write_errors(out / "errors.jsonl")
    report = sim.report(str(trace_path))
    report.write_metrics_csv(out / "metrics.csv")
    return report
