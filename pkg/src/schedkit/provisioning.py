"""Simulated resource pools: request lifecycle, deployment latency, caps and cost."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Optional, Sequence

from .errors import LocalPoolFixed, NotIdle, NotProvisioned, UnknownPool, UnknownResource
from .events import EventKind, SchedulingEvent
from .model import Resource, Spread

if TYPE_CHECKING:
    from .context import SchedulerContext


class PoolKind(str, Enum):
    LOCAL = "local"
    ON_DEMAND = "on_demand"
    SPOT_LIKE = "spot_like"


class RequestStatus(str, Enum):
    PENDING = "Pending"
    GRANTED = "Granted"
    DENIED = "Denied"


@dataclass(frozen=True)
class ResourcePoolSpec:
    pool_id: str
    kind: PoolKind
    slots_per_instance: int = 1
    speed_factor: float = 1.0
    deployment_latency: Spread = Spread()
    cost_rate: float = 0.0
    capacity_cap: Optional[int] = None
    denial_probability: float = 0.0
    bandwidth: float = math.inf
    instances: int = 1

    def __post_init__(self) -> None:
        if self.slots_per_instance < 1:
            raise ValueError(f"{self.pool_id}: slots_per_instance must be positive")
        if self.speed_factor <= 0:
            raise ValueError(f"{self.pool_id}: speed_factor must be positive")
        if self.cost_rate < 0:
            raise ValueError(f"{self.pool_id}: cost_rate cannot be negative")
        if self.capacity_cap is not None and self.capacity_cap < 1:
            raise ValueError(f"{self.pool_id}: capacity_cap must be positive")
        if not 0.0 <= self.denial_probability <= 1.0:
            raise ValueError(f"{self.pool_id}: denial_probability must lie in [0, 1]")
        if self.bandwidth <= 0:
            raise ValueError(f"{self.pool_id}: bandwidth must be positive")
        if self.kind is PoolKind.LOCAL:
            if not self.deployment_latency.is_zero or self.cost_rate != 0:
                raise ValueError(f"{self.pool_id}: local pools have no latency and no cost")
            if self.instances < 1:
                raise ValueError(f"{self.pool_id}: a local pool needs at least one instance")
        if self.kind is not PoolKind.SPOT_LIKE and self.denial_probability != 0:
            raise ValueError(f"{self.pool_id}: only spot-like pools can deny requests")


@dataclass
class ProvisionRequest:
    request_id: str
    pool_id: str
    application_id: str
    count: int
    issued_at: float
    matures_at: float
    status: RequestStatus = RequestStatus.PENDING
    reason: Optional[str] = None
    resource_ids: tuple[str, ...] = ()


class ResourceProvisioner:
    """Owns the pool definitions and every instance they produce.

    Each pool draws latencies and denials from its own random stream, seeded
    from the experiment seed and the pool id, so adding a pool never perturbs
    the draws of another.
    """

    def __init__(self, pools: Sequence[ResourcePoolSpec], context: SchedulerContext, seed: int = 0):
        self.pools: dict[str, ResourcePoolSpec] = {}
        for spec in pools:
            if spec.pool_id in self.pools:
                raise ValueError(f"duplicate pool id {spec.pool_id!r}")
            self.pools[spec.pool_id] = spec
        self.context = context
        self._rngs = {pid: random.Random(f"{seed}:{pid}") for pid in self.pools}
        self.requests: dict[str, ProvisionRequest] = {}
        self.instances: dict[str, Resource] = {}
        self._counters = {pid: 0 for pid in self.pools}
        context.attach_provisioner(self)

    def _publish(self, kind: EventKind, now: float, **payload: Any) -> None:
        self.context.now = now
        self.context.bus.publish(SchedulingEvent(kind, now, payload))

    def _new_resource_id(self, pool_id: str) -> str:
        n = self._counters[pool_id]
        self._counters[pool_id] = n + 1
        return f"{pool_id}-{n}"

    def default_pool_id(self) -> Optional[str]:
        for pid, spec in self.pools.items():
            if spec.kind is not PoolKind.LOCAL:
                return pid
        return None

    def create_local_resources(self) -> list[Resource]:
        """Register the fixed local instances with the context."""
        created = []
        for pid, spec in self.pools.items():
            if spec.kind is not PoolKind.LOCAL:
                continue
            for _ in range(spec.instances):
                created.append(
                    Resource(
                        resource_id=self._new_resource_id(pid),
                        total_slots=spec.slots_per_instance,
                        pool_id=pid,
                        speed_factor=spec.speed_factor,
                    )
                )
        self.context.add_resources(created)
        return created

    def pool_of(self, resource_id: str) -> ResourcePoolSpec:
        resource = self.context.resource_history.get(resource_id)
        if resource is None:
            raise UnknownResource(resource_id)
        return self.pools[resource.pool_id]

    def live_instances(self, pool_id: str) -> list[Resource]:
        return [r for r in self.instances.values() if r.pool_id == pool_id and r.released_at is None]

    # requests

    def request_provision(self, pool_id: str, count: int, application_id: str, now: float) -> str:
        spec = self.pools.get(pool_id)
        if spec is None:
            raise UnknownPool(pool_id)
        if spec.kind is PoolKind.LOCAL:
            raise LocalPoolFixed(f"{pool_id} is a fixed local pool")
        if count < 1:
            raise ValueError("count must be >= 1")
        latency = spec.deployment_latency.sample(self._rngs[pool_id])
        req = ProvisionRequest(
            request_id=f"req-{len(self.requests):04d}",
            pool_id=pool_id,
            application_id=application_id,
            count=count,
            issued_at=now,
            matures_at=now + latency,
        )
        self.requests[req.request_id] = req
        self._publish(
            EventKind.RESOURCE_PROVISION_REQUESTED,
            now,
            request_id=req.request_id,
            pool_id=pool_id,
            application_id=application_id,
            count=count,
            matures_at=req.matures_at,
        )
        return req.request_id

    def pending(self) -> list[ProvisionRequest]:
        reqs = [r for r in self.requests.values() if r.status is RequestStatus.PENDING]
        return sorted(reqs, key=lambda r: (r.matures_at, r.request_id))

    def pool_tick(self, now: float) -> list[ProvisionRequest]:
        """Resolve every pending request that has matured by ``now``."""
        resolved = []
        for req in self.pending():
            if req.matures_at > now:
                break
            self._resolve(req, now)
            resolved.append(req)
        return resolved

    def _resolve(self, req: ProvisionRequest, now: float) -> None:
        spec = self.pools[req.pool_id]
        live = len(self.live_instances(req.pool_id))
        if spec.capacity_cap is not None and live + req.count > spec.capacity_cap:
            req.status, req.reason = RequestStatus.DENIED, "CapacityCap"
        elif spec.denial_probability > 0 and self._rngs[req.pool_id].random() < spec.denial_probability:
            req.status, req.reason = RequestStatus.DENIED, "Unavailable"
        else:
            req.status = RequestStatus.GRANTED
        if req.status is RequestStatus.DENIED:
            self._publish(
                EventKind.RESOURCE_PROVISION_PROCESSED,
                now,
                request_id=req.request_id,
                pool_id=req.pool_id,
                outcome=req.status.value,
                reason=req.reason,
            )
            self.context.notify_provision_processed(req.request_id, False, ())
            return
        created = [
            Resource(
                resource_id=self._new_resource_id(req.pool_id),
                total_slots=spec.slots_per_instance,
                pool_id=req.pool_id,
                speed_factor=spec.speed_factor,
                provisioned_at=req.matures_at,
            )
            for _ in range(req.count)
        ]
        req.resource_ids = tuple(r.resource_id for r in created)
        for r in created:
            self.instances[r.resource_id] = r
        self._publish(
            EventKind.RESOURCE_PROVISION_PROCESSED,
            now,
            request_id=req.request_id,
            pool_id=req.pool_id,
            outcome=req.status.value,
            resource_ids=list(req.resource_ids),
            slots_per_instance=spec.slots_per_instance,
            cost_rate=spec.cost_rate,
            provisioned_at=req.matures_at,
        )
        self.context.add_resources(created, now)
        self.context.notify_provision_processed(req.request_id, True, req.resource_ids)

    def request_release(self, resource_ids: Sequence[str], now: float) -> None:
        targets = []
        for rid in resource_ids:
            resource = self.instances.get(rid)
            if resource is None or resource.released_at is not None:
                if rid in self.context.resources:
                    raise NotProvisioned(f"{rid} is not a provisioned instance")
                raise UnknownResource(rid)
            if not resource.is_idle:
                raise NotIdle(f"{rid} still has {resource.busy_slots} busy slot(s)")
            targets.append(resource)
        if not targets:
            return
        for resource in targets:
            self.context.remove_resource(resource.resource_id, now)
            resource.released_at = now
        self._publish(
            EventKind.RESOURCE_RELEASE_REQUESTED,
            now,
            resource_ids=[r.resource_id for r in targets],
        )

    def release_all(self, now: float) -> list[str]:
        live = [r.resource_id for r in self.instances.values() if r.released_at is None]
        self.request_release(live, now)
        return live

    def query_pools(self, now: float) -> list[dict[str, Any]]:
        """Pool descriptors with the number of connected, unreleased instances."""
        reply = []
        for pid, spec in self.pools.items():
            count = sum(
                1 for r in self.context.resources.values() if r.pool_id == pid and r.is_connected
            )
            reply.append({"pool_id": pid, "kind": spec.kind.value, "instances": count})
        self._publish(EventKind.RESOURCE_POOLS_QUERY_REQUESTED, now, pools=reply)
        return reply

    # accounting

    def instance_seconds(self, now: float) -> float:
        return math.fsum(self._alive(r, now) for r in self.instances.values())

    def total_cost(self, now: float) -> float:
        return math.fsum(
            self.pools[r.pool_id].cost_rate * self._alive(r, now) for r in self.instances.values()
        )

    @staticmethod
    def _alive(r: Resource, now: float) -> float:
        end = now if r.released_at is None else min(r.released_at, now)
        return max(0.0, end - r.provisioned_at)
