import math

import pytest
from hypothesis import given, strategies as st

from schedkit import (
    FIFOSchedulingAlgorithm,
    PoolKind,
    ResourcePoolSpec,
    ResourceProvisioner,
    SchedulerContext,
    Spread,
)
from schedkit.errors import LocalPoolFixed, NotIdle, NotProvisioned, UnknownPool, UnknownResource
from schedkit.report import fold_trace

LOCAL = ResourcePoolSpec("local", PoolKind.LOCAL, slots_per_instance=8)
AZURE = ResourcePoolSpec("azure", PoolKind.ON_DEMAND, deployment_latency=Spread(120.0), cost_rate=0.01)


def setup(*pools, seed=0):
    ctx = SchedulerContext()
    ctx.set_algorithm(FIFOSchedulingAlgorithm())
    prov = ResourceProvisioner(pools or (LOCAL, AZURE), ctx, seed)
    prov.create_local_resources()
    ctx.start(0.0)
    return ctx, prov


def test_pool_spec_invariants():
    with pytest.raises(ValueError):
        ResourcePoolSpec("l", PoolKind.LOCAL, cost_rate=1.0)
    with pytest.raises(ValueError):
        ResourcePoolSpec("l", PoolKind.LOCAL, deployment_latency=Spread(5))
    with pytest.raises(ValueError):
        ResourcePoolSpec("o", PoolKind.ON_DEMAND, denial_probability=0.5)
    ResourcePoolSpec("s", PoolKind.SPOT_LIKE, denial_probability=0.5)


def test_request_matures_after_latency():
    ctx, prov = setup()
    ctx.now = 300.0
    rid = prov.request_provision("azure", 1, "a", 300.0)
    assert prov.requests[rid].matures_at == 420.0
    assert prov.pool_tick(419.0) == []
    prov.pool_tick(420.0)
    rec = ctx.bus.trace[-1]
    assert rec["kind"] == "ResourceProvisionProcessed" and rec["outcome"] == "Granted"
    assert "azure-0" in ctx.resources and "azure-0" in ctx.algorithm.free_list


def test_request_guards():
    ctx, prov = setup()
    with pytest.raises(ValueError):
        prov.request_provision("azure", 0, "a", 0)
    with pytest.raises(LocalPoolFixed):
        prov.request_provision("local", 1, "a", 0)
    with pytest.raises(UnknownPool):
        prov.request_provision("mars", 1, "a", 0)


def test_capacity_cap_denies():
    capped = ResourcePoolSpec("azure", PoolKind.ON_DEMAND, capacity_cap=2)
    ctx, prov = setup(LOCAL, capped)
    prov.request_provision("azure", 2, "a", 0)
    prov.pool_tick(0)
    prov.request_provision("azure", 1, "a", 0)
    prov.pool_tick(0)
    assert ctx.bus.trace[-1]["outcome"] == "Denied" and ctx.bus.trace[-1]["reason"] == "CapacityCap"


def test_certain_denial():
    spot = ResourcePoolSpec("spot", PoolKind.SPOT_LIKE, denial_probability=1.0)
    ctx, prov = setup(LOCAL, spot)
    for t in range(5):
        prov.request_provision("spot", 1, "a", float(t))
        prov.pool_tick(float(t))
        assert ctx.bus.trace[-1]["outcome"] == "Denied"


def test_release_rules():
    ctx, prov = setup()
    prov.request_provision("azure", 2, "a", 0)
    prov.pool_tick(120)
    prov.request_release(["azure-1"], 130)
    assert "azure-1" not in ctx.algorithm.free_list and "azure-1" not in ctx.resources
    with pytest.raises(NotProvisioned):
        prov.request_release(["local-0"], 130)
    with pytest.raises(UnknownResource):
        prov.request_release(["ghost"], 130)
    ctx.resources["azure-0"].free_slots = 0
    with pytest.raises(NotIdle):
        prov.request_release(["azure-0"], 130)


def test_query_pools_counts():
    ctx, prov = setup()
    reply = prov.query_pools(0)
    assert [(p["pool_id"], p["instances"]) for p in reply] == [("local", 1), ("azure", 0)]
    prov.request_provision("azure", 3, "a", 0)
    prov.pool_tick(120)
    assert prov.query_pools(120)[1]["instances"] == 3
    prov.request_release(["azure-2"], 130)
    assert prov.query_pools(130)[1]["instances"] == 2
    assert ctx.bus.trace[-1]["kind"] == "ResourcePoolsQueryRequested"


def test_cost():
    ctx, prov = setup()
    assert prov.total_cost(1000) == 0
    prov.request_provision("azure", 1, "a", 0)
    prov.pool_tick(120)
    assert math.isclose(prov.total_cost(720), 6.0)
    prov.request_provision("azure", 1, "a", 120)
    prov.pool_tick(240)
    prov.request_release(["azure-0"], 300)
    prov.request_release(["azure-1"], 500)
    assert math.isclose(prov.total_cost(900), 0.01 * 180 + 0.01 * 260)
    assert prov.total_cost(900) == fold_trace(ctx.bus.trace).total_cost(900)


@given(st.lists(st.tuples(st.floats(0, 500), st.integers(1, 3)), min_size=1, max_size=8), st.integers(0, 10**6))
def test_cost_monotone_in_time(requests, seed):
    spot = ResourcePoolSpec("spot", PoolKind.SPOT_LIKE, deployment_latency=Spread(10, 50), cost_rate=0.003,
                            denial_probability=0.3)
    ctx, prov = setup(LOCAL, spot, seed=seed)
    now = 0.0
    for gap, count in requests:
        now += gap
        prov.pool_tick(now)
        prov.request_provision("spot", count, "a", now)
    prov.pool_tick(now + 50)
    costs = [prov.total_cost(t) for t in (now, now + 50, now + 100, now + 1000)]
    assert costs == sorted(costs)
    assert all(r.status.value != "Pending" for r in prov.requests.values())


def test_pools_draw_from_independent_streams():
    spot = ResourcePoolSpec("spot", PoolKind.SPOT_LIKE, deployment_latency=Spread(10, 50))
    other = ResourcePoolSpec("other", PoolKind.SPOT_LIKE, deployment_latency=Spread(10, 50))
    _, a = setup(LOCAL, spot, seed=7)
    _, b = setup(LOCAL, other, spot, seed=7)
    b.request_provision("other", 1, "a", 0)
    assert a.requests[a.request_provision("spot", 1, "a", 0)].matures_at == \
        b.requests[b.request_provision("spot", 1, "a", 0)].matures_at
