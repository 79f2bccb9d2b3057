import math
import random

import pytest
from hypothesis import given, strategies as st

from schedkit.errors import IllegalTransition
from schedkit.model import (
    LEGAL_TRANSITIONS,
    QosContract,
    Resource,
    Spread,
    TaskState,
    TaskUnit,
    finalize_metrics,
    requeue,
    transition,
)


def task(**kw):
    kw.setdefault("task_id", "t1")
    kw.setdefault("application_id", "a")
    kw.setdefault("compute_demand", 10.0)
    return TaskUnit(**kw)


def test_transition_stamps_time():
    t = transition(task(), TaskState.SCHEDULED, 10)
    assert t.state is TaskState.SCHEDULED and t.scheduled_time == 10
    t = transition(transition(t, TaskState.RUNNING, 12), TaskState.FINISHED, 72)
    assert t.end_time == 72 and t.state is TaskState.FINISHED


def test_terminal_has_no_outgoing_edges():
    done = task(state=TaskState.FINISHED)
    with pytest.raises(IllegalTransition):
        transition(done, TaskState.RUNNING, 1)


@pytest.mark.parametrize("src", list(TaskState))
@pytest.mark.parametrize("dst", list(TaskState))
def test_transition_table(src, dst):
    t = task(state=src)
    if (src, dst) in LEGAL_TRANSITIONS:
        assert transition(t, dst, 5).state is dst
    else:
        with pytest.raises(IllegalTransition):
            transition(t, dst, 5)


def test_terminal_states_have_no_edges():
    assert not [e for e in LEGAL_TRANSITIONS if e[0].is_terminal]


def test_requeue():
    t = requeue(task(state=TaskState.FAILED, attempt=0, assigned_resource="r"), 50)
    assert (t.state, t.attempt, t.submit_time, t.assigned_resource) == (TaskState.QUEUED, 1, 50, None)
    t = requeue(task(state=TaskState.ABORTED, attempt=2), 90)
    assert (t.state, t.attempt, t.submit_time) == (TaskState.QUEUED, 3, 90)
    with pytest.raises(IllegalTransition):
        requeue(task(state=TaskState.FINISHED), 1)


def test_finalize_metrics():
    t = task(submit_time=0, scheduled_time=10, start_time=12, end_time=72, state=TaskState.FINISHED)
    m = finalize_metrics(t)
    assert (m.queue_time, m.execution_time, m.final_state) == (10, 60, TaskState.FINISHED)

    aborted = transition(task(submit_time=5), TaskState.ABORTED, 9)
    m = finalize_metrics(aborted)
    assert (m.queue_time, m.execution_time, m.final_state) == (0, 0, TaskState.ABORTED)

    m = finalize_metrics(task(scheduled_time=0, start_time=0, end_time=396, state=TaskState.FINISHED))
    assert (m.queue_time, m.execution_time) == (0, 396)

    with pytest.raises(ValueError):
        finalize_metrics(task())


@given(
    submit=st.floats(0, 1e6),
    waits=st.lists(st.floats(0, 1e4), min_size=3, max_size=3),
)
def test_metrics_non_negative(submit, waits):
    t = task(submit_time=submit)
    now = submit
    for state, gap in zip((TaskState.SCHEDULED, TaskState.RUNNING, TaskState.FINISHED), waits):
        now += gap
        t = transition(t, state, now)
    m = finalize_metrics(t)
    assert m.queue_time >= 0 and m.execution_time >= 0


@given(st.lists(st.sampled_from(list(TaskState)), max_size=12))
def test_random_walks_never_leave_terminal(steps):
    t = task()
    for s in steps:
        try:
            t = transition(t, s, 0)
        except IllegalTransition:
            pass
    if t.state.is_terminal:
        for s in TaskState:
            with pytest.raises(IllegalTransition):
                transition(t, s, 0)


def test_qos_mean_and_remaining():
    q = QosContract("a", total_work=55, deadline=100.0)
    assert q.average_task_execution_time == 60.0
    q.record_execution(396)
    assert q.average_task_execution_time == 396
    assert q.time_remaining(40) == 60
    assert q.time_remaining(500) == 0
    with pytest.raises(ValueError):
        QosContract("a", total_work=0)


def test_resource_defaults():
    r = Resource("r", total_slots=4, pool_id="p")
    assert r.free_slots == 4 and r.is_idle and r.busy_slots == 0
    r.free_slots = 1
    assert r.busy_slots == 3 and not r.is_idle


def test_spread():
    rng = random.Random(1)
    assert Spread(5).sample(rng) == 5
    assert all(1 <= Spread(1, 2).sample(rng) <= 2 for _ in range(100))
    assert Spread().is_zero and math.isclose(Spread(2, 4).mean, 3)
    with pytest.raises(ValueError):
        Spread(3, 1)
