"""Experiment reports, plus an independent re-derivation from the event trace."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Optional

from .model import TaskState, finalize_metrics

if TYPE_CHECKING:
    from .sim import Simulation

METRIC_COLUMNS = ("task_id", "attempt", "queue_time", "execution_time", "final_state", "resource_id", "pool_id")


@dataclass(frozen=True)
class TaskRecord:
    task_id: str
    attempt: int
    queue_time: float
    execution_time: float
    final_state: str
    resource_id: Optional[str]
    pool_id: Optional[str]


@dataclass
class ExperimentReport:
    algorithm: str
    seed: int
    makespan: Optional[float]
    deadline: Optional[float]
    deadline_met: bool
    tasks: list[TaskRecord]
    provisioned_instance_seconds: float
    total_cost: float
    counters: dict[str, int]
    end_time: float
    trace_digest: str
    event_trace_path: Optional[str] = None
    errors: int = 0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tasks"] = [asdict(t) for t in self.tasks]
        return d

    def summary_line(self) -> str:
        makespan = "incomplete" if self.makespan is None else f"{self.makespan:.1f}s"
        return (
            f"{self.algorithm}: makespan={makespan} deadline_met={str(self.deadline_met).lower()} "
            f"cost={self.total_cost:.4f}"
        )

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_csv(self, path) -> Path:
        """Flat ``key,value`` rendering of the scalar fields and counters."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for key, value in sorted(self.to_dict().items()):
            if key in ("tasks", "counters"):
                continue
            w.writerow([key, "" if value is None else value])
        for key, value in sorted(self.counters.items()):
            w.writerow([f"counters.{key}", value])
        path = Path(path)
        path.write_text(buf.getvalue())
        return path

    def write_metrics_csv(self, path) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for t in self.tasks:
            w.writerow([getattr(t, c) if getattr(t, c) is not None else "" for c in METRIC_COLUMNS])
        path = Path(path)
        path.write_text(buf.getvalue())
        return path


def _makespan(end_times: Iterable[float], all_finished: bool) -> Optional[float]:
    if not all_finished:
        return None
    return max(end_times, default=0.0)


def build_report(sim: Simulation, trace_path: Optional[str] = None) -> ExperimentReport:
    ctx = sim.context
    records = []
    finished_ends = []
    for task_id in sorted(ctx.store.tasks):
        task = ctx.store.tasks[task_id]
        if task.state.is_terminal:
            data = finalize_metrics(task)
            queue_time, execution_time = data.queue_time, data.execution_time
        else:
            queue_time = execution_time = 0.0
        if task.state is TaskState.FINISHED:
            finished_ends.append(task.end_time)
        resource = ctx.resource_history.get(task.assigned_resource) if task.assigned_resource else None
        records.append(
            TaskRecord(
                task_id=task_id,
                attempt=task.attempt,
                queue_time=queue_time,
                execution_time=execution_time,
                final_state=task.state.value,
                resource_id=task.assigned_resource,
                pool_id=resource.pool_id if resource else None,
            )
        )
    all_finished = len(finished_ends) == sim.config.workload.task_count
    makespan = _makespan(finished_ends, all_finished)
    deadline = sim.config.workload.deadline
    met = makespan is not None and (deadline is None or makespan <= deadline)
    return ExperimentReport(
        algorithm=sim.algorithm.name,
        seed=sim.seed,
        makespan=makespan,
        deadline=deadline,
        deadline_met=met,
        tasks=records,
        provisioned_instance_seconds=sim.provisioner.instance_seconds(sim.clock),
        total_cost=sim.provisioner.total_cost(sim.clock),
        counters=count_events(sim.bus.trace),
        end_time=sim.clock,
        trace_digest=sim.bus.trace_digest(),
        event_trace_path=trace_path,
        errors=len(ctx.errors),
    )


def count_events(trace: Iterable[dict[str, Any]]) -> dict[str, int]:
    counters = {
        "tasks_finished": 0,
        "tasks_failed": 0,
        "tasks_aborted": 0,
        "tasks_requeued": 0,
        "provision_requests": 0,
        "provision_granted": 0,
        "provision_denied": 0,
        "releases": 0,
        "disconnects": 0,
        "reconnects": 0,
    }
    for rec in trace:
        kind = rec["kind"]
        if kind == "TaskFinished":
            counters["tasks_finished"] += 1
        elif kind == "TaskFailed":
            counters["tasks_failed"] += 1
        elif kind == "TaskAborted":
            counters["tasks_aborted"] += 1
        elif kind == "TaskRequeued":
            counters["tasks_requeued"] += 1
        elif kind == "ResourceProvisionRequested":
            counters["provision_requests"] += 1
        elif kind == "ResourceProvisionProcessed":
            key = "provision_granted" if rec["outcome"] == "Granted" else "provision_denied"
            counters[key] += 1
        elif kind == "ResourceReleaseRequested":
            counters["releases"] += len(rec["resource_ids"])
        elif kind == "ResourceDisconnected":
            counters["disconnects"] += 1
        elif kind == "ResourceReconnected":
            counters["reconnects"] += 1
    return counters


@dataclass
class TraceFold:
    """Everything recoverable from a trace alone."""

    tasks: dict[str, dict[str, Any]] = field(default_factory=dict)
    provisioned: dict[str, dict[str, Any]] = field(default_factory=dict)
    end_time: float = 0.0

    def scheduling_data(self) -> dict[str, tuple[float, float, str, int]]:
        out = {}
        for tid, t in self.tasks.items():
            queue = 0.0 if t["scheduled"] is None else t["scheduled"] - t["submit"]
            execution = 0.0
            if t["started"] is not None and t["ended"] is not None:
                execution = t["ended"] - t["started"]
            out[tid] = (queue, execution, t["state"], t["attempt"])
        return out

    def makespan(self) -> Optional[float]:
        if not self.tasks or any(t["state"] != "Finished" for t in self.tasks.values()):
            return None
        return max(t["ended"] for t in self.tasks.values())

    def total_cost(self, now: Optional[float] = None) -> float:
        now = self.end_time if now is None else now
        terms = []
        for r in self.provisioned.values():
            end = now if r["released"] is None else min(r["released"], now)
            terms.append(r["cost_rate"] * max(0.0, end - r["since"]))
        return math.fsum(terms)


def fold_trace(trace: Iterable[dict[str, Any]]) -> TraceFold:
    """Replay a trace without touching the store; used as a cross-check."""
    fold = TraceFold()
    for rec in trace:
        kind, now = rec["kind"], rec["time"]
        fold.end_time = max(fold.end_time, now)
        tid = rec.get("task_id")
        if kind == "TaskSubmitted":
            fold.tasks[tid] = {
                "submit": now, "scheduled": None, "started": None, "ended": None,
                "state": "Queued", "attempt": rec["attempt"],
            }
        elif kind == "TaskAssigned":
            fold.tasks[tid].update(scheduled=now, state="Scheduled")
        elif kind == "TaskStarted":
            fold.tasks[tid].update(started=now, state="Running")
        elif kind in ("TaskFinished", "TaskFailed", "TaskAborted"):
            fold.tasks[tid].update(ended=now, state=kind[len("Task"):])
        elif kind == "TaskRequeued":
            fold.tasks[tid] = {
                "submit": now, "scheduled": None, "started": None, "ended": None,
                "state": "Queued", "attempt": rec["attempt"],
            }
        elif kind == "ResourceProvisionProcessed" and rec["outcome"] == "Granted":
            for rid in rec["resource_ids"]:
                fold.provisioned[rid] = {
                    "since": rec["provisioned_at"], "released": None, "cost_rate": rec["cost_rate"],
                }
        elif kind == "ResourceReleaseRequested":
            for rid in rec["resource_ids"]:
                if rid in fold.provisioned:
                    fold.provisioned[rid]["released"] = now
    return fold
