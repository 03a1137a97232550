import numpy as np
import pytest

from pregelft.algorithms import HashMin, PageRank, RequestRespond, TriangleCount
from pregelft.cluster import Job
from pregelft.engine import GlobalControl, SuperstepResult, build_workers, run_superstep
from pregelft.errors import ContractViolation, LogError
from pregelft.harness import generate_graph
from pregelft.locallog import (
    SLOG_HEADER,
    LocalLog,
    decode_message_log,
    decode_state_log,
    regenerate_batches,
)

from oracles import random_simple_graph


def stepped_workers(records, program, n, steps):
    nv = len(records)
    workers = build_workers(records, program, n)
    for i in range(1, steps + 1):
        for w in workers:
            run_superstep(w, i, program, num_vertices=nv)
        for w in workers:
            for other in workers:
                other.deliver(w.rank, w.out_queues[other.rank])
        if i < steps:
            for w in workers:
                w.assemble()
    return workers


def test_message_log_equals_sent_batches(tmp_path):
    records = generate_graph(300, 2400, 1)
    workers = stepped_workers(records, PageRank(), 4, 2)
    w = workers[1]
    log = LocalLog(tmp_path, 1, PageRank())
    log.log_outgoing(2, w.out_queues)
    assert log.logged_steps("mlog") == [2]
    for t in range(4):
        assert log.load_messages(2, t) == w.out_queues[t]
        i, target, msgs = decode_message_log(log.mlog_path(2, t).read_bytes(),
                                             PageRank().message_codec)
        assert (i, target) == (2, t)


def test_state_log_has_one_record_per_vertex(tmp_path):
    records = generate_graph(1000, 3000, 2)
    workers = stepped_workers(records, PageRank(), 1, 1)
    log = LocalLog(tmp_path, 0, PageRank())
    size = log.log_states(1, workers[0].vertices.values())
    assert size == SLOG_HEADER.size + 1000 * (8 + 1 + 4 + 8)
    step, states = decode_state_log(log.slog_path(1).read_bytes(), PageRank().value_codec)
    assert step == 1 and len(states) == 1000


def test_state_log_keeps_comp_false_records(tmp_path):
    # vertex 7 is isolated: it halts in superstep 1 and is not computed in 2
    records = [(1, [2]), (2, [1]), (7, [])]
    workers = stepped_workers(records, HashMin(), 1, 2)
    log = LocalLog(tmp_path, 0, HashMin())
    log.log_states(2, workers[0].vertices.values())
    comps = {vid: comp for vid, comp, _ in log.load_states(2)}
    assert comps == {1: True, 2: True, 7: False}


def test_state_log_size_independent_of_message_volume(tmp_path):
    p = TriangleCount(1)
    records = random_simple_graph(np.random.default_rng(3), 60, 300)
    workers = stepped_workers(records, p, 1, 2)
    log = LocalLog(tmp_path, 0, p)
    busy = log.log_states(1, workers[0].vertices.values())  # odd: requests sent
    quiet = log.log_states(2, workers[0].vertices.values())  # even: nothing sent
    assert busy == quiet


@pytest.mark.parametrize("program,records", [
    (PageRank(), generate_graph(200, 1600, 4)),
    (TriangleCount(2), random_simple_graph(np.random.default_rng(5), 80, 400)),
])
def test_regeneration_from_states_equals_message_logs(tmp_path, program, records):
    n = 4
    steps = 3
    workers = stepped_workers(records, program, n, steps)
    for w in workers:
        log = LocalLog(tmp_path, w.rank, program)
        log.log_outgoing(steps, w.out_queues)
        mlogs = log.load_for_forward(steps, [0, 2], n)
        log.wipe()
        log = LocalLog(tmp_path, w.rank, program)
        log.log_states(steps, w.vertices.values())
        adjacency = {vid: v.adj for vid, v in w.vertices.items()}
        slogs = log.load_for_forward(steps, [0, 2], n, adjacency=adjacency,
                                     num_vertices=len(records))
        assert set(slogs) == {0, 2}
        for t in (0, 2):
            assert sorted(slogs[t]) == sorted(mlogs[t])


def test_forward_with_no_targets_is_empty(tmp_path):
    log = LocalLog(tmp_path, 0, PageRank())
    assert log.load_for_forward(3, [], 4) == {}


def test_missing_log_is_an_error(tmp_path):
    log = LocalLog(tmp_path, 0, PageRank())
    with pytest.raises(LogError):
        log.load_for_forward(3, [1], 4, adjacency={})
    with pytest.raises(LogError):
        log.load_messages(3, 1)


def test_control_log_fetch(tmp_path):
    log = LocalLog(tmp_path, 0, TriangleCount())
    ctrl = GlobalControl(12, False, (7, False), False, False)
    log.record_control(ctrl)
    assert log.fetch_control(12) == ctrl
    with pytest.raises(ContractViolation):
        log.fetch_control(13)
    assert (tmp_path / "0" / "control.log").read_text().count("\n") == 1


def test_partial_result_round_trip(tmp_path):
    log = LocalLog(tmp_path, 2, TriangleCount())
    res = SuperstepResult(17, 2, 5, 40, 30, (3, True), False)
    log.log_partial(res)
    got = log.logged_partial(17)
    assert (got.superstep, got.rank, got.active_count, got.combined_count,
            got.partial_aggregate, got.mask_flag) == (17, 2, 5, 30, (3, True), False)


def _fill(log, steps, kind):
    for i in steps:
        if kind == "mlog":
            log.log_outgoing(i, [[], []])
        else:
            log.log_states(i, [])


def test_gc_message_logging_drops_checkpointed_superstep(tmp_path):
    log = LocalLog(tmp_path, 0, PageRank())
    _fill(log, range(11, 24), "mlog")
    deleted = log.gc("hwlog", 20)
    assert deleted == 2 * 10
    assert log.logged_steps() == [21, 22, 23]


def test_gc_state_logging_keeps_checkpointed_superstep(tmp_path):
    log = LocalLog(tmp_path, 0, PageRank())
    _fill(log, range(11, 24), "slog")
    assert log.gc("lwlog", 20) == 9
    assert log.logged_steps() == [20, 21, 22, 23]


def test_gc_empty_directory(tmp_path):
    assert LocalLog(tmp_path, 0, PageRank()).gc("hwlog", 20) == 0


def test_wipe_models_disk_loss(tmp_path):
    log = LocalLog(tmp_path, 0, PageRank())
    _fill(log, [1, 2], "slog")
    log.record_control(GlobalControl(1, False, None, False, False))
    log.wipe()
    assert log.files() == [] and not log.has_control(1)


def test_lwlog_masked_supersteps_write_message_logs(tmp_path):
    records = random_simple_graph(np.random.default_rng(8), 30, 60)
    kinds = {}

    job = Job(records, RequestRespond(rounds=3), strategy="lwlog", workers=2, root=tmp_path)
    job.run()
    for w in job.stats.log_writes:
        kinds.setdefault(w["step"], set()).add(w["kind"])
    assert all(kinds[i] == ({"messages"} if i % 2 == 0 else {"states"}) for i in kinds)
    assert set(kinds) == set(range(1, 8))


def test_regenerate_batches_only_for_requested_ranks():
    records = generate_graph(100, 600, 9)
    workers = stepped_workers(records, PageRank(), 3, 1)
    w = workers[0]
    states = [(vid, v.comp, v.value) for vid, v in w.vertices.items()]
    adj = {vid: v.adj for vid, v in w.vertices.items()}
    out = regenerate_batches(PageRank(), 1, states, adj, 3, [1], num_vertices=100)
    assert list(out) == [1]
    assert out[1] == w.out_queues[1]
