"""Deadline-driven provisioning policies.

All three policies dispatch in arrival order like FIFO and differ only in
when they ask for more capacity. Ticks are driven from outside: the context
calls :meth:`ProvisioningAlgorithm.provisioning_tick` after task state
changes, and the simulator adds a periodic timer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from ..model import QosContract
from .fifo import FIFOSchedulingAlgorithm

NONE = "none"
GROW = "grow"
SHRINK = "shrink"


@dataclass(frozen=True)
class ProvisionDecision:
    action: str = NONE
    pool_id: Optional[str] = None
    count: int = 0
    resource_ids: tuple[str, ...] = ()
    rationale: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.action == GROW and self.count < 1:
            raise ValueError("a grow decision needs count >= 1")
        if self.action == SHRINK and not self.resource_ids:
            raise ValueError("a shrink decision needs resource ids")


def capacity_check(
    qos: QosContract,
    current_resources: int,
    to_grow: bool,
    now: float,
    *,
    ceil_ratio: bool = False,
) -> dict[str, Any]:
    """Evaluate the grow/shrink capacity predicate and return every intermediate.

    With no resources the capacity is exceeded unconditionally. Otherwise the
    remaining task count (not yet dispatched when growing, not yet completed
    when shrinking) is divided by the resource count with integer division,
    unless ``ceil_ratio`` asks for the rounded-up variant.
    """
    time_remaining = qos.time_remaining(now)
    out: dict[str, Any] = {
        "current_resources": current_resources,
        "to_grow": to_grow,
        "time_remaining": time_remaining,
    }
    if current_resources <= 0:
        out["required"] = True
        return out
    if to_grow:
        task_remaining = qos.total_work - qos.scheduled_tasks
    else:
        task_remaining = qos.total_work - qos.work_completed
    if ceil_ratio:
        ratio = -(-task_remaining // current_resources)
    else:
        ratio = task_remaining // current_resources
    required_time = qos.average_task_execution_time * ratio
    out.update(
        task_remaining=task_remaining,
        task_resource_ratio=ratio,
        required_time=required_time,
        required=required_time > time_remaining,
    )
    return out


def exceed_resource_capacity(
    qos: QosContract,
    current_resources: int,
    to_grow: bool,
    now: float,
    *,
    ceil_ratio: bool = False,
) -> bool:
    return capacity_check(qos, current_resources, to_grow, now, ceil_ratio=ceil_ratio)["required"]


def estimated_completion(qos: QosContract, total_slots: int, now: float) -> float:
    """Completion estimate used by the default policy: whole waves of the mean task time."""
    remaining = qos.total_work - qos.scheduled_tasks
    if remaining <= 0:
        return now
    if total_slots <= 0:
        return math.inf
    waves = -(-remaining // total_slots)
    return now + waves * qos.average_task_execution_time


class ProvisioningAlgorithm(FIFOSchedulingAlgorithm):
    """Shared machinery: one outstanding grow request per application at a time."""

    supports_provisioning = True
    include_transfer_in_mean = False

    def __init__(
        self,
        pool: Optional[str] = None,
        grow_step: int = 1,
        tick_period: float = 30.0,
    ) -> None:
        super().__init__()
        if grow_step < 1:
            raise ValueError("grow_step must be >= 1")
        if tick_period <= 0:
            raise ValueError("tick_period must be positive")
        self.pool = pool
        self.grow_step = grow_step
        self.tick_period = tick_period
        self.pending: dict[str, str] = {}
        self.decisions: list[tuple[float, str, ProvisionDecision]] = []

    def options(self) -> dict[str, Any]:
        return {"pool": self.pool, "grow_step": self.grow_step, "tick_period": self.tick_period}

    def grow_pool(self) -> Optional[str]:
        if self.pool is not None:
            return self.pool
        return self._require_scheduler().default_pool_id()

    def decide(self, application_id: str, qos: QosContract, now: float) -> ProvisionDecision:
        raise NotImplementedError

    def provisioning_tick(self, now: float) -> None:
        if not self.keep_running:
            return
        ctx = self._require_scheduler()
        for app_id, qos in sorted(ctx.store.qos.items()):
            decision = self.decide(app_id, qos, now)
            if decision.action == NONE:
                continue
            self.decisions.append((now, app_id, decision))
            if decision.action == GROW:
                request_id = self.request_resources(decision.pool_id, decision.count, app_id)
                if request_id is not None:
                    self.pending[app_id] = request_id
            elif decision.action == SHRINK:
                self.release_resources(decision.resource_ids)

    def provision_processed(self, request_id: str, granted: bool, resource_ids: Sequence[str]) -> None:
        super().provision_processed(request_id, granted, resource_ids)
        for app_id, rid in list(self.pending.items()):
            if rid == request_id:
                del self.pending[app_id]

    def _grow(self, rationale: dict[str, Any]) -> ProvisionDecision:
        pool = self.grow_pool()
        if pool is None:
            return ProvisionDecision(NONE, rationale={**rationale, "blocked": "no pool"})
        return ProvisionDecision(GROW, pool_id=pool, count=self.grow_step, rationale=rationale)


class DeadlinePriorityProvisioningAlgorithm(ProvisioningAlgorithm):
    """Grows while the capacity predicate says the deadline is at risk.

    When the shrink-side check passes and every provisioned resource is idle,
    the most recently provisioned one is released.
    """

    name = "deadline_priority"

    def __init__(self, ceil_ratio: bool = False, **kwargs: Any) -> None:
        super().__init__(**kwargs)
        self.ceil_ratio = ceil_ratio

    def options(self) -> dict[str, Any]:
        return {**super().options(), "ceil_ratio": self.ceil_ratio}

    def decide(self, application_id: str, qos: QosContract, now: float) -> ProvisionDecision:
        ctx = self._require_scheduler()
        slots = ctx.connected_slots()
        grow = capacity_check(qos, slots, True, now, ceil_ratio=self.ceil_ratio)
        if grow["required"]:
            if application_id in self.pending:
                return ProvisionDecision(NONE, rationale={**grow, "blocked": "pending"})
            return self._grow(grow)
        shrink = capacity_check(qos, slots, False, now, ceil_ratio=self.ceil_ratio)
        if not shrink["required"]:
            provisioned = [r for r in ctx.resources.values() if r.provisioned_at is not None and r.is_connected]
            idle = ctx.idle_provisioned()
            if provisioned and len(idle) == len(provisioned):
                return ProvisionDecision(
                    SHRINK, resource_ids=(idle[-1].resource_id,), rationale=shrink
                )
        return ProvisionDecision(NONE, rationale=shrink)


class DefaultProvisioningAlgorithm(ProvisioningAlgorithm):
    """Requests capacity when the wave-based completion estimate passes the deadline.

    The estimate uses whatever mean the context records; by default that mean
    excludes data transfer time.
    """

    name = "default"

    def decide(self, application_id: str, qos: QosContract, now: float) -> ProvisionDecision:
        slots = self._require_scheduler().connected_slots()
        if qos.total_work - qos.scheduled_tasks <= 0:
            return ProvisionDecision(NONE, rationale={"slots": slots, "undispatched": 0})
        expected = estimated_completion(qos, slots, now)
        rationale = {"expected_completion": expected, "deadline": qos.deadline, "slots": slots}
        if expected > qos.deadline:
            if application_id in self.pending:
                return ProvisionDecision(NONE, rationale={**rationale, "blocked": "pending"})
            return self._grow(rationale)
        return ProvisionDecision(NONE, rationale=rationale)


class DataAwareProvisioningAlgorithm(DefaultProvisioningAlgorithm):
    """The default estimator fed with a mean that includes data transfer."""

    name = "data_aware"
    include_transfer_in_mean = True
