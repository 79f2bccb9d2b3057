"""Independent re-implementations used as test oracles.

Nothing here imports the scheduling code paths under test beyond plain data
types, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import heapq
import math
from collections import defaultdict


def capacity_required(
    total_work, scheduled_tasks, work_completed, current_resources, avg, time_remaining, to_grow, ceil=False
):
    """Line-by-line transcription of the capacity predicate using repeated subtraction."""
    required = False
    if current_resources > 0:
        remaining = total_work - (scheduled_tasks if to_grow else work_completed)
        ratio = 0
        left = remaining
        while left >= current_resources:
            left -= current_resources
            ratio += 1
        if ceil and left > 0:
            ratio += 1
        required_time = avg * ratio
        if required_time > time_remaining:
            required = True
    else:
        required = True
    return required


def fifo_single_slot(arrivals, durations):
    """Event-free FIFO on one slot: returns (start order, start times)."""
    order = sorted(range(len(arrivals)), key=lambda i: (arrivals[i], i))
    free_at = 0.0
    starts = {}
    for i in order:
        start = max(free_at, arrivals[i])
        starts[i] = start
        free_at = start + durations[i]
    return order, starts


def fifo_makespan(n, slots, demand):
    return math.ceil(n / slots) * demand


def multi_slot_fifo(arrivals, durations, slots):
    """Greedy list scheduling on identical slots in arrival order."""
    heap = [0.0] * slots
    heapq.heapify(heap)
    ends = []
    for i in sorted(range(len(arrivals)), key=lambda i: (arrivals[i], i)):
        free = heapq.heappop(heap)
        end = max(free, arrivals[i]) + durations[i]
        ends.append(end)
        heapq.heappush(heap, end)
    return max(ends, default=0.0)


TERMINAL = {"TaskFinished", "TaskFailed", "TaskAborted"}


def trace_violations(trace, slots_by_resource):
    """Sweep a trace and report invariant breaches.

    Checks clock monotonicity, exactly one terminal event per (task, attempt),
    requeues only after a non-finished terminal, and per-resource busy slots
    never exceeding capacity or going negative.
    """
    problems = []
    last_time = -math.inf
    last_seq = -1
    open_attempt = {}
    closed = set()
    where = {}
    busy = defaultdict(int)
    final = {}
    for rec in trace:
        if rec["time"] < last_time:
            problems.append(f"clock regression at seq {rec['seq']}")
        if rec["seq"] != last_seq + 1:
            problems.append(f"seq gap at {rec['seq']}")
        last_time, last_seq = rec["time"], rec["seq"]
        kind = rec["kind"]
        tid = rec.get("task_id")
        if kind == "TaskSubmitted":
            open_attempt[tid] = rec["attempt"]
        elif kind == "TaskRequeued":
            prev = final.get(tid)
            if prev not in ("Failed", "Aborted"):
                problems.append(f"{tid} requeued after {prev}")
            open_attempt[tid] = rec["attempt"]
        elif kind == "TaskAssigned":
            rid = rec["resource_id"]
            where[tid] = rid
            busy[rid] += 1
            if busy[rid] > slots_by_resource.get(rid, 0):
                problems.append(f"{rid} over capacity at seq {rec['seq']}")
        elif kind in TERMINAL:
            key = (tid, rec["attempt"])
            if key in closed:
                problems.append(f"second terminal event for {key}")
            if open_attempt.get(tid) != rec["attempt"]:
                problems.append(f"terminal for stale attempt {key}")
            closed.add(key)
            final[tid] = kind[len("Task"):]
            rid = where.pop(tid, None)
            if rid is not None:
                busy[rid] -= 1
                if busy[rid] < 0:
                    problems.append(f"{rid} negative busy count")
    for tid, attempt in open_attempt.items():
        if (tid, attempt) not in closed:
            problems.append(f"{tid} attempt {attempt} never terminated")
    return problems


def idle_while_queued(trace, slots_by_resource):
    """Timestamps where a slot sat free while a task waited (work conservation).

    Only meaningful for fault-free, provisioning-free runs. State is compared
    after all events sharing a timestamp have been applied.
    """
    queued = set()
    busy = defaultdict(int)
    where = {}
    bad = []
    total = sum(slots_by_resource.values())
    by_time = defaultdict(list)
    for rec in trace:
        by_time[rec["time"]].append(rec)
    for t in sorted(by_time):
        for rec in by_time[t]:
            kind, tid = rec["kind"], rec.get("task_id")
            if kind in ("TaskSubmitted", "TaskRequeued"):
                queued.add(tid)
            elif kind == "TaskAssigned":
                queued.discard(tid)
                where[tid] = rec["resource_id"]
                busy[rec["resource_id"]] += 1
            elif kind in TERMINAL and tid in where:
                busy[where.pop(tid)] -= 1
        if queued and sum(busy.values()) < total:
            bad.append(t)
    return bad


def provisioning_violations(trace, caps):
    """Request/processed pairing and capacity caps from the trace alone."""
    problems = []
    requested = {}
    processed = set()
    live = defaultdict(set)
    pool_of = {}
    for rec in trace:
        kind = rec["kind"]
        if kind == "ResourceProvisionRequested":
            if rec["request_id"] in requested:
                problems.append(f"duplicate request id {rec['request_id']}")
            requested[rec["request_id"]] = rec
        elif kind == "ResourceProvisionProcessed":
            rid = rec["request_id"]
            if rid not in requested:
                problems.append(f"processed without request {rid}")
            if rid in processed:
                problems.append(f"{rid} processed twice")
            processed.add(rid)
            if rec["time"] < requested.get(rid, {}).get("matures_at", -math.inf):
                problems.append(f"{rid} processed before maturing")
            if rec["outcome"] == "Granted":
                pool = rec["pool_id"]
                for r in rec["resource_ids"]:
                    live[pool].add(r)
                    pool_of[r] = pool
                cap = caps.get(pool)
                if cap is not None and len(live[pool]) > cap:
                    problems.append(f"{pool} cap {cap} exceeded")
        elif kind == "ResourceReleaseRequested":
            for r in rec["resource_ids"]:
                live[pool_of.get(r, "")].discard(r)
    for rid in requested:
        if rid not in processed:
            problems.append(f"request {rid} never processed")
    return problems


def cost_from_trace(trace, end_time):
    """Cost fold written without the package's fold helper: sum of rate * lifetime."""
    since, rate, until = {}, {}, {}
    for rec in trace:
        if rec["kind"] == "ResourceProvisionProcessed" and rec["outcome"] == "Granted":
            for r in rec["resource_ids"]:
                since[r] = rec["provisioned_at"]
                rate[r] = rec["cost_rate"]
        elif rec["kind"] == "ResourceReleaseRequested":
            for r in rec["resource_ids"]:
                until.setdefault(r, rec["time"])
    return math.fsum(rate[r] * max(0.0, min(until.get(r, end_time), end_time) - since[r]) for r in since)


class LiveMonitor:
    """Checks store-level invariants after every published event of a simulation."""

    def __init__(self, sim):
        from schedkit.events import ALL_KINDS

        self.sim = sim
        self.problems = []
        self.outstanding = defaultdict(set)
        sim.bus.subscribe(ALL_KINDS, self._check)

    def _check(self, event):
        ctx = self.sim.context
        seq = len(ctx.bus.trace) - 1
        active = defaultdict(int)
        finished = defaultdict(int)
        for t in ctx.store.tasks.values():
            if t.state.value in ("Scheduled", "Running"):
                active[t.assigned_resource] += 1
            elif t.state.value == "Finished":
                finished[t.application_id] += 1
        for rid, r in ctx.resources.items():
            if r.is_connected and r.total_slots - r.free_slots != active[rid]:
                self.problems.append(f"seq {seq}: slot conservation broken on {rid}")
            if not r.is_connected and active[rid]:
                self.problems.append(f"seq {seq}: tasks active on disconnected {rid}")
        if ctx.running:
            eligible = {rid for rid, r in ctx.resources.items() if r.is_connected and r.free_slots > 0}
            listed = set(ctx.algorithm.free_list)
            if eligible != listed or len(listed) != len(ctx.algorithm.free_list):
                self.problems.append(f"seq {seq}: free list {sorted(listed)} != {sorted(eligible)}")
        for app, qos in ctx.store.qos.items():
            if qos.work_completed != finished[app]:
                self.problems.append(f"seq {seq}: work_completed drift for {app}")
        p = event.payload
        if event.kind.value == "ResourceProvisionRequested":
            self.outstanding[p["application_id"]].add(p["request_id"])
            if len(self.outstanding[p["application_id"]]) > 1:
                self.problems.append(f"seq {seq}: two outstanding grows for {p['application_id']}")
        elif event.kind.value == "ResourceProvisionProcessed":
            for ids in self.outstanding.values():
                ids.discard(p["request_id"])
