"""
Masked supersteps
=================

In the request/respond program a response depends on the request received,
so messages of even supersteps cannot be regenerated from vertex states.
Such supersteps are masked: a lightweight checkpoint due there is deferred to
the next superstep, and state logging falls back to message logging.
"""

from pregelft import FailureScenario, Job, RequestRespond, generate_graph, run_job

records = generate_graph(200, 800, seed=7)

lwcp = run_job(records, RequestRespond(rounds=12), strategy="lwcp", workers=4)
print("LWCP checkpoints at", [c["step"] for c in lwcp.stats.cp_writes])

job = Job(records, RequestRespond(rounds=12), strategy="lwlog", workers=4)
job.run()
kinds = {}
for w in job.stats.log_writes:
    kinds.setdefault(w["step"], w["kind"])
print("LWLog log kinds:", " ".join(f"{i}:{k[0]}" for i, k in sorted(kinds.items())))
job.close()

# a failure in a masked and in an unmasked superstep
scenario = FailureScenario.parse("fail step=14 phase=during-communicate ranks=1\n"
                                 "fail step=17 phase=during-communicate ranks=2\n")
failed = run_job(records, RequestRespond(rounds=12), strategy="lwlog", workers=4,
                 scenario=scenario)
clean = run_job(records, RequestRespond(rounds=12), strategy="lwlog", workers=4)
print("equivalent:", failed.encoded_values() == clean.encoded_values())
