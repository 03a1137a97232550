"""
Recovering from worker failures
===============================

Kills workers at superstep 17 (checkpoints every 10 supersteps), then again
while recovering superstep 15, under each of the four strategies.  The final
values are compared byte for byte with a failure-free run.
"""

from pregelft import GenSpec, RunConfig, emit, run_with_oracle

scenario = """
fail step=17 phase=during-communicate ranks=1
fail step=15 phase=during-recovery-superstep ranks=2
"""

reports = []
for strategy in ("hwcp", "lwcp", "hwlog", "lwlog"):
    config = RunConfig(strategy=strategy, algorithm="pagerank",
                       params={"max_supersteps": 25}, gen=GenSpec(3000, 30_000, seed=5),
                       workers=8, scenario=scenario)
    outcome, _, eq = run_with_oracle(config)
    print(f"{strategy}: {eq.describe()}")
    reports.append(outcome.report)

# wall-clock metrics per strategy; log metrics are '-' for checkpoint-only runs
print(emit(reports, "human"))
