"""
Message traffic during log-based recovery
=========================================

With message or state logs, survivors do not roll back: during recovery they
only forward logged messages to the respawned workers.  Traffic therefore
scales with the number of failed workers.
"""

from pregelft import FailureScenario, PageRank, generate_graph, run_job

records = generate_graph(5000, 50_000, seed=6)
clean = run_job(records, PageRank(max_supersteps=20), workers=16)
normal = {s["step"]: s["messages"] for s in clean.stats.steps}

for killed in (1, 2, 4, 8):
    ranks = ",".join(str(r) for r in range(killed))
    scenario = FailureScenario.parse(f"fail step=17 phase=during-communicate ranks={ranks}")
    result = run_job(records, PageRank(max_supersteps=20), strategy="lwlog", workers=16,
                     scenario=scenario)
    recov = [s for s in result.stats.steps if s["kind"] == "recovery"]
    share = sum(s["messages"] for s in recov) / sum(normal[s["step"]] for s in recov)
    print(f"{killed} of 16 killed: recovery supersteps carry {share:.1%} of normal traffic")
