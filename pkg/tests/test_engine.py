import operator

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pregelft.algorithms import HashMin, PageRank, RequestRespond
from pregelft.cluster import Job
from pregelft.engine import (
    CheckpointPolicy,
    SuperstepResult,
    Trace,
    Worker,
    build_workers,
    check_compute_before_send,
    combine,
    full_commit,
    run_superstep,
    should_checkpoint,
)
from pregelft.errors import InvariantViolation
from pregelft.graph import Message, VertexState, partition
from pregelft.harness import generate_graph


def test_combine_sums_to_one_message():
    assert combine({9: [1.0, 2.0, 0.5]}, operator.add) == [Message(9, 3.5)]


def test_combine_single_and_no_combiner():
    assert combine({4: [7]}, operator.add) == [Message(4, 7)]
    assert combine({4: [7, 1], 2: [3]}, None) == [Message(2, 3), Message(4, 7), Message(4, 1)]


def test_build_workers_partitions_by_modulo():
    records = generate_graph(50, 200, 1)
    workers = build_workers(records, PageRank(), 4)
    for w in workers:
        assert all(partition(v, 4) == w.rank for v in w.vertices)
        assert list(w.vertices) == sorted(w.vertices)
    assert sum(len(w.vertices) for w in workers) == 50


def test_build_workers_rejects_undeclared_neighbor():
    with pytest.raises(ValueError):
        build_workers([(0, [1])], PageRank(), 2)


def test_all_halted_no_messages_computes_nothing():
    w = Worker(0, 1, {1: VertexState(1, 0.1, [1], active=False)})
    res = run_superstep(w, 1, PageRank(), num_vertices=1)
    assert res.computed_count == 0 and res.active_count == 0
    assert w.s == 1 and not w.vertices[1].comp


def test_pagerank_sends_one_message_per_edge():
    records = generate_graph(40, 160, 3)
    n = 3
    workers = build_workers(records, PageRank(), n)
    total = sum(run_superstep(w, 1, PageRank(), num_vertices=40).sent_message_count
                for w in workers)
    assert total == sum(len(adj) for _, adj in records)


def test_run_superstep_requires_previous_state():
    w = Worker(0, 1, {1: VertexState(1, 0.1, [1])})
    with pytest.raises(InvariantViolation):
        run_superstep(w, 2, PageRank(), num_vertices=1)


def test_out_queues_are_combined_per_target_rank():
    w = Worker(0, 2, {0: VertexState(0, 0.5, [1, 3]), 2: VertexState(2, 0.25, [1])})
    run_superstep(w, 1, PageRank(), num_vertices=4)
    assert w.out_queues[0] == []
    assert w.out_queues[1] == [Message(1, 0.25 + 0.25), Message(3, 0.25)]


def test_assemble_orders_by_sender_rank():
    w = Worker(0, 3)
    w.deliver(2, [Message(0, "c")])
    w.deliver(0, [Message(0, "a")])
    w.deliver(1, [Message(0, "b")])
    w.assemble()
    assert w.incoming == {0: ["a", "b", "c"]}


def _result(rank, active=0, combined=0, agg=None, masked=False):
    return SuperstepResult(1, rank, active, combined, combined, agg, masked)


def test_full_commit_halts_when_quiet():
    ctrl = full_commit([_result(0), _result(1)], 5, PageRank(), CheckpointPolicy(10))
    assert ctrl.halt and not ctrl.checkpoint_now


def test_full_commit_checkpoint_and_mask():
    p = PageRank()
    ctrl = full_commit([_result(0, 3, 3)], 10, p, CheckpointPolicy(10))
    assert ctrl.checkpoint_now and not ctrl.halt
    ctrl = full_commit([_result(0, 3, 3), _result(1, 1, 1, masked=True)], 10, p,
                       CheckpointPolicy(10))
    assert ctrl.masked and not ctrl.checkpoint_now
    ctrl = full_commit([_result(0, 3, 3), _result(1, 1, 1, masked=True)], 10, p,
                       CheckpointPolicy(10), defer_on_mask=False)
    assert ctrl.masked and ctrl.checkpoint_now


def test_should_checkpoint_examples():
    pol = CheckpointPolicy(10)
    assert should_checkpoint(pol, 10) is True
    assert should_checkpoint(pol, 7) is False
    assert should_checkpoint(pol, 10, masked=True) is False
    assert should_checkpoint(pol, 11, last_checkpoint=0) is True
    assert should_checkpoint(pol, 11, last_checkpoint=10) is False


def test_should_checkpoint_time_policy():
    pol = CheckpointPolicy(None, 2.0)
    assert should_checkpoint(pol, 3, elapsed=2.5)
    assert not should_checkpoint(pol, 3, elapsed=1.0)
    assert not should_checkpoint(pol, 3, elapsed=9.0, masked=True)


@pytest.mark.parametrize("kw", [dict(every_supersteps=0), dict(every_supersteps=None),
                                dict(every_supersteps=3, every_seconds=1.0)])
def test_policy_validation(kw):
    with pytest.raises(ValueError):
        CheckpointPolicy(**kw)


@given(st.integers(1, 20), st.lists(st.booleans(), min_size=1, max_size=60))
def test_deferred_checkpoint_lands_on_first_unmasked_step(delta, masks):
    pol = CheckpointPolicy(delta)
    last = 0
    due_since = None
    for i, masked in enumerate(masks, start=1):
        if i % delta == 0 and due_since is None:
            due_since = i
        if should_checkpoint(pol, i, last_checkpoint=last, masked=masked):
            assert not masked and due_since is not None
            last, due_since = i, None
        elif not masked:
            assert due_since is None


def test_compute_before_send_holds_in_concurrent_mode():
    trace = Trace()
    records = generate_graph(200, 1000, 5)
    Job(records, PageRank(max_supersteps=6), workers=4, mode="concurrent", trace=trace).run()
    check_compute_before_send(trace.events)
    assert len(trace.of_kind("send")) > 0


def test_check_compute_before_send_detects_violation():
    events = [("send", {"epoch": 0, "rank": 1, "superstep": 2, "computed": True}),
              ("compute-end", {"epoch": 0, "rank": 1, "superstep": 2})]
    with pytest.raises(InvariantViolation):
        check_compute_before_send(events)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_deterministic_runs_are_identical(seed):
    records = generate_graph(60, 200, seed, undirected=True)
    a = Job(records, HashMin(), workers=3).run()
    b = Job(records, HashMin(), workers=3).run()
    assert a.encoded_values() == b.encoded_values()
    assert [s["messages"] for s in a.stats.steps] == [s["messages"] for s in b.stats.steps]


def test_concurrent_mode_matches_deterministic():
    records = generate_graph(300, 3000, 11)
    a = Job(records, PageRank(), workers=4).run()
    b = Job(records, PageRank(), workers=4, mode="concurrent").run()
    assert a.encoded_values() == b.encoded_values()


def test_halting_is_sound():
    records = generate_graph(80, 200, 2, undirected=True)
    job = Job(records, HashMin(), workers=3)
    result = job.run()
    extra = sum(run_superstep(w, result.supersteps + 1, HashMin(), num_vertices=80).computed_count
                for w in job.workers.values())
    assert extra == 0


def test_masked_superstep_flag():
    p = RequestRespond()
    w = Worker(0, 1, {0: VertexState(0, p.init_value(0, [0], 1), [0])})
    w.incoming = {0: [0]}
    w.s = 1
    assert run_superstep(w, 2, p, num_vertices=1).mask_flag
