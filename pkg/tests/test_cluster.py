from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pregelft.algorithms import HashMin, KCore, PageRank, RequestRespond, TriangleCount
from pregelft.cluster import (
    FailureEvent,
    FailureScenario,
    Job,
    Phase,
    Strategy,
    elect_master,
    revoke,
    run_job,
    shrink,
    spawn_and_merge,
)
from pregelft.engine import Trace
from pregelft.errors import InvariantViolation, ScenarioError, UnrecoverableError
from pregelft.harness import generate_graph

from oracles import peeling_graph

STRATEGIES = [s.value for s in Strategy]


def scenario(text):
    return FailureScenario.parse(text)


def twin(records, program_factory, strategy, text, workers=4, **kw):
    """Failure run and failure-free run of the same job."""
    failed = run_job(records, program_factory(), strategy=strategy, workers=workers,
                     scenario=scenario(text), **kw)
    clean = run_job(records, program_factory(), strategy=strategy, workers=workers, **kw)
    return failed, clean


# -- membership primitives --------------------------------------------------

def test_revoke_is_idempotent():
    handling = set()
    assert revoke([0, 1, 2], 1, handling) == {0, 1, 2}
    assert revoke([0, 1, 2], 2, handling) == set()
    assert handling == {0, 1, 2}


def test_shrink_keeps_survivor_order():
    assert shrink(range(5), [4, 0, 2]) == (0, 2, 4)


def test_spawn_and_merge_fills_missing_ranks():
    assert spawn_and_merge((0, 2), 4) == ((0, 1, 2, 3), (1, 3))
    assert spawn_and_merge((0, 1), 2) == ((0, 1), ())


def test_elect_master_examples():
    assert elect_master({0: 17, 1: 15, 2: 17}) == 0
    assert elect_master({3: 10, 5: 12}) == 5
    with pytest.raises(UnrecoverableError):
        elect_master({})


@given(st.dictionaries(st.integers(0, 31), st.integers(0, 50), min_size=1))
def test_elect_master_is_agreed_and_maximal(table):
    picks = {elect_master(dict(table)) for _ in table}
    assert len(picks) == 1
    (m,) = picks
    assert table[m] == max(table.values())
    assert all(r > m for r, s in table.items() if s == table[m] and r != m)


# -- scenarios ---------------------------------------------------------------

def test_scenario_round_trip_and_comments():
    text = "# header\nfail step=17 phase=during-communicate ranks=3\n\n" \
           "fail step=15 phase=during-recovery-superstep ranks=1,2  # cascade\n"
    sc = scenario(text)
    assert sc.events == [FailureEvent(17, Phase.COMMUNICATE, (3,)),
                         FailureEvent(15, Phase.RECOVERY, (1, 2))]
    assert scenario(sc.format()).events == sc.events


@pytest.mark.parametrize("bad", [
    "fail step=x phase=during-compute ranks=1",
    "fail step=3 phase=sometime ranks=1",
    "fail step=3 phase=during-compute ranks=",
    "die step=3",
])
def test_scenario_parse_errors(bad):
    with pytest.raises(ScenarioError):
        scenario(bad)


def test_events_fire_once():
    sc = scenario("fail step=4 phase=during-compute ranks=1,2")
    assert sc.inject(4, Phase.COMPUTE) == (1, 2)
    assert sc.inject(4, Phase.COMPUTE) == ()
    sc.reset()
    assert sc.inject(4, Phase.COMPUTE) == (1, 2)


def test_killing_every_worker_is_a_scenario_error():
    records = generate_graph(40, 120, 1)
    with pytest.raises(ScenarioError):
        run_job(records, PageRank(), workers=2,
                scenario=scenario("fail step=5 phase=during-communicate ranks=0,1"))


# -- recovery correctness ----------------------------------------------------

SCENARIOS = {
    "one": "fail step=17 phase=during-communicate ranks=2",
    "many": "fail step=17 phase=during-communicate ranks=0,1,2,3,4",
    "cascade": "fail step=17 phase=during-communicate ranks=1\n"
               "fail step=15 phase=during-recovery-superstep ranks=4",
    "compute": "fail step=12 phase=during-compute ranks=0",
    "cpwrite": "fail step=20 phase=during-checkpoint-write ranks=3",
    "early": "fail step=4 phase=during-communicate ranks=5\n"
             "fail step=2 phase=during-recovery-superstep ranks=1",
}


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_pagerank_recovers_to_failure_free_bytes(strategy, name):
    records = generate_graph(300, 2400, 7)
    failed, clean = twin(records, lambda: PageRank(max_supersteps=25), strategy,
                         SCENARIOS[name], workers=6)
    assert failed.stats.failures
    assert failed.encoded_values() == clean.encoded_values()


@pytest.mark.parametrize("strategy", STRATEGIES)
@pytest.mark.parametrize("factory,records", [
    (HashMin, generate_graph(400, 500, 3, undirected=True, window=2)),
    (lambda: TriangleCount(1), generate_graph(80, 900, 4, undirected=True)),
    (lambda: RequestRespond(12), generate_graph(60, 200, 5)),
    (lambda: RequestRespond(12, True), generate_graph(60, 200, 5)),
    (lambda: KCore(2), peeling_graph(40)),
], ids=["hashmin", "triangle", "reqres", "reqres-pred", "kcore"])
def test_other_programs_recover(strategy, factory, records):
    failed, clean = twin(records, factory, strategy, SCENARIOS["cascade"], workers=6)
    assert failed.stats.failures
    assert failed.encoded_values() == clean.encoded_values()
    assert failed.aggregate == clean.aggregate


def test_checkpoint_strategy_reruns_lost_supersteps():
    records = generate_graph(200, 1600, 2)
    job = Job(records, PageRank(max_supersteps=25), strategy="hwcp", workers=4,
              scenario=scenario(SCENARIOS["one"]))
    job.run()
    (f,) = job.stats.failures
    assert f["s_last"] == 10
    rerun = [(s["step"], s["kind"]) for s in job.stats.steps if s["epoch"] == 1]
    assert rerun[:7] == [(i, "recovery") for i in range(11, 17)] + [(17, "last")]
    assert rerun[7][1] == "normal"
    job.close()


def test_checkpoint_write_failure_falls_back_to_previous():
    records = generate_graph(200, 1600, 2)
    job = Job(records, PageRank(max_supersteps=25), strategy="lwcp", workers=4,
              scenario=scenario(SCENARIOS["cpwrite"]))
    job.run()
    (f,) = job.stats.failures
    assert f["step"] == 20 and f["s_last"] == 10
    committed = [c["step"] for c in job.stats.cp_writes]
    assert committed.count(20) == 1  # only the retry committed
    job.close()


def _sends(trace, epoch):
    counts = Counter()
    for kind, info in trace.events:
        if kind == "send" and info["epoch"] == epoch and info["count"]:
            counts[(info["superstep"], info["rank"], info["target"])] += info["count"]
    return counts


@pytest.mark.parametrize("strategy,first", [("hwlog", 11), ("lwlog", 10)])
def test_log_recovery_forwards_only_to_respawned_rank(strategy, first):
    records = generate_graph(300, 3000, 8)
    failed_trace, clean_trace = Trace(), Trace()
    run_job(records, PageRank(max_supersteps=25), strategy=strategy, workers=4,
            scenario=scenario(SCENARIOS["one"]), trace=failed_trace)
    run_job(records, PageRank(max_supersteps=25), strategy=strategy, workers=4,
            trace=clean_trace)
    failed_sends = _sends(failed_trace, 1)
    clean_sends = _sends(clean_trace, 0)
    # survivors are ahead until 17, so only rank 2 receives; a light checkpoint
    # holds no messages, so under lwlog superstep 10 is regenerated as well
    recovery = {k: v for k, v in failed_sends.items() if k[0] < 17}
    assert recovery and {k[2] for k in recovery} == {2}
    clean = {k: v for k, v in clean_sends.items() if first <= k[0] < 17 and k[2] == 2}
    assert recovery == clean
    # superstep 17 was interrupted mid-delivery: everybody receives it again
    assert {k: v for k, v in failed_sends.items() if k[0] == 17} == \
        {k: v for k, v in clean_sends.items() if k[0] == 17}


def test_log_recovery_loads_no_checkpoint_on_survivors():
    records = generate_graph(200, 1600, 8)
    job = Job(records, PageRank(max_supersteps=25), strategy="hwlog", workers=4,
              scenario=scenario(SCENARIOS["one"]))
    job.run()
    assert {c["rank"] for c in job.stats.cp_loads} == {2}
    job.close()


def test_case1_messages_are_sufficient_for_recomputation():
    """Recomputed vertices see exactly the messages of the failure-free run."""
    seen = {0: {}, 1: {}}

    class Recording(PageRank):
        def compute(self, ctx, vertex, msgs):
            epoch = 1 if ctx.superstep <= 17 and phase["failed"] else 0
            seen[epoch][(ctx.superstep, vertex.id)] = list(msgs)
            super().compute(ctx, vertex, msgs)

    phase = {"failed": False}

    def on_event(kind, job, **info):
        if kind == "failure":
            phase["failed"] = True

    records = generate_graph(200, 2000, 12)
    run_job(records, Recording(max_supersteps=20), strategy="hwlog", workers=4,
            scenario=scenario(SCENARIOS["one"]), on_event=on_event)
    failed_view = dict(seen[1])
    seen[0].clear()
    phase["failed"] = False
    run_job(records, Recording(max_supersteps=20), strategy="hwlog", workers=4)
    assert failed_view
    for key, msgs in failed_view.items():
        assert msgs == seen[0][key]


def test_cascade_produces_three_distinct_states():
    records = generate_graph(300, 2400, 7)
    text = "fail step=17 phase=during-communicate ranks=1\n" \
           "fail step=15 phase=during-recovery-superstep ranks=2\n"
    failed, clean = twin(records, lambda: PageRank(max_supersteps=25), "hwlog", text)
    assert failed.encoded_values() == clean.encoded_values()
    first, second = failed.stats.failures
    assert first["s_table"] == {0: 17, 2: 17, 3: 17}
    # rank 1 (respawned at 10) had recomputed up to 15; 0 and 3 are still at 17,
    # and the new rank 2 starts from the checkpoint at 10
    assert second["s_table"] == {0: 17, 1: 15, 3: 17}
    assert second["s_last"] == 10
    assert len(set(second["s_table"].values()) | {second["s_last"]}) == 3
    assert second["master"] == 0


def test_lagging_worker_is_an_invariant_violation():
    records = generate_graph(50, 200, 1)
    job = Job(records, PageRank(), strategy="hwlog", workers=3)
    job._load()
    job.workers[0].s = 5
    job.workers[1].s = 5
    job.workers[2].s = 2  # more than one superstep behind step 5
    job.recover_until = 5
    with pytest.raises(InvariantViolation):
        job._recovery_superstep(5)
    job.close()


def test_survivors_agree_and_rank_set_is_restored():
    records = generate_graph(200, 1600, 3)
    job = Job(records, PageRank(max_supersteps=25), strategy="lwlog", workers=8,
              scenario=scenario("fail step=13 phase=during-communicate ranks=1,5,6"))
    job.run()
    (f,) = job.stats.failures
    assert f["election_agreed"] and f["master"] == 0
    assert sorted(job.workers) == list(range(8))
    job.close()


def test_concurrent_mode_recovers_identically():
    records = generate_graph(300, 2400, 9)
    text = SCENARIOS["cascade"]
    a = run_job(records, PageRank(max_supersteps=25), strategy="lwlog", workers=6,
                scenario=scenario(text), mode="concurrent")
    b = run_job(records, PageRank(max_supersteps=25), strategy="lwlog", workers=6)
    assert a.encoded_values() == b.encoded_values()


def test_failure_after_halting_step_is_ignored():
    records = generate_graph(60, 200, 1)
    clean = run_job(records, PageRank(max_supersteps=5), workers=2)
    late = run_job(records, PageRank(max_supersteps=5), workers=2,
                   scenario=scenario("fail step=50 phase=during-compute ranks=1"))
    assert not late.stats.failures
    assert late.encoded_values() == clean.encoded_values()


@pytest.mark.parametrize("text,phase", [
    ("fail step=12 phase=during-compute ranks=0", "during-compute"),
    ("fail step=12 phase=during-communicate ranks=0", "during-communicate"),
    ("fail step=20 phase=during-checkpoint-write ranks=0", "during-checkpoint-write"),
])
def test_failure_records_the_phase_it_was_injected_in(text, phase):
    records = generate_graph(100, 400, 1)
    result = run_job(records, PageRank(max_supersteps=25), workers=3, scenario=scenario(text))
    assert [f["phase"] for f in result.stats.failures] == [phase]
