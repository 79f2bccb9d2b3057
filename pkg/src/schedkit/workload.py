"""Bag-of-tasks workload generation and fault scripts."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .model import QosContract, Spread, TaskUnit

DISCONNECT = "disconnect"
RECONNECT = "reconnect"


@dataclass(frozen=True)
class WorkloadSpec:
    """Shape of a bag-of-tasks application.

    ``arrival_rate`` of None submits every task at time zero; a positive rate
    draws exponential inter-arrival gaps. ``deadline`` is seconds from start.
    """

    task_count: int
    compute_demand: Spread
    input_data_size: Spread = Spread()
    arrival_rate: Optional[float] = None
    deadline: Optional[float] = None
    application_id: str = "app"

    def __post_init__(self) -> None:
        if self.task_count < 1:
            raise ValueError("task_count must be >= 1")
        if self.arrival_rate is not None and self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.deadline is not None and self.deadline <= 0:
            raise ValueError("deadline must be positive")


def generate_workload(
    spec: WorkloadSpec, seed: int = 0, prior_mean: float = 60.0
) -> tuple[list[TaskUnit], QosContract]:
    rng = random.Random(f"{seed}:workload:{spec.application_id}")
    width = max(4, len(str(spec.task_count - 1)))
    tasks = []
    arrival = 0.0
    for i in range(spec.task_count):
        demand = spec.compute_demand.sample(rng)
        data = spec.input_data_size.sample(rng)
        if spec.arrival_rate is not None and i > 0:
            arrival += rng.expovariate(spec.arrival_rate)
        tasks.append(
            TaskUnit(
                task_id=f"{spec.application_id}-{i:0{width}d}",
                application_id=spec.application_id,
                compute_demand=demand,
                input_data_size=data,
                submit_time=arrival,
            )
        )
    qos = QosContract(
        application_id=spec.application_id,
        total_work=spec.task_count,
        deadline=math.inf if spec.deadline is None else spec.deadline,
        prior_mean=prior_mean,
    )
    return tasks, qos


@dataclass(frozen=True)
class FaultEntry:
    time: float
    action: str
    resource_id: str

    def __post_init__(self) -> None:
        if self.action not in (DISCONNECT, RECONNECT):
            raise ValueError(f"unknown fault action {self.action!r}")
        if self.time < 0:
            raise ValueError("fault time cannot be negative")


@dataclass(frozen=True)
class FaultScript:
    entries: tuple[FaultEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        last = -math.inf
        down: set[str] = set()
        for e in self.entries:
            if e.time < last:
                raise ValueError("fault times must be non-decreasing")
            last = e.time
            if e.action == DISCONNECT:
                down.add(e.resource_id)
            elif e.resource_id not in down:
                raise ValueError(f"reconnect of {e.resource_id} at t={e.time} without a prior disconnect")
            else:
                down.discard(e.resource_id)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)
