"""
Vertex programs on a simulated cluster
======================================

Runs each bundled vertex program on a small generated graph and checks the
answer against a direct computation.
"""

import numpy as np

from pregelft import HashMin, KCore, PageRank, TriangleCount, generate_graph, run_job

# a seeded directed graph: 500 vertices, 4000 edges
records = generate_graph(500, 4000, seed=1)

# PageRank over 4 workers; compare with dense power iteration
result = run_job(records, PageRank(damping=0.85, max_supersteps=20), workers=4)
n = len(records)
m = np.zeros((n, n))
for v, adj in records:
    for u in adj:
        m[u, v] += 1.0 / len(adj)
a = np.full(n, 1.0 / n)
for _ in range(19):
    a = 0.15 / n + 0.85 * (m @ a)
print("PageRank max abs error:", max(abs(result.values[v] - a[v]) for v in range(n)))

# Hash-Min connected components on an undirected graph with several components
undirected = generate_graph(300, 200, seed=2, undirected=True)
labels = run_job(undirected, HashMin(), workers=3).values
print("components:", len({x.min_id for x in labels.values()}))

# triangle counting with a request budget of C * degree per odd superstep
tri = run_job(generate_graph(200, 1500, seed=3, undirected=True), TriangleCount(c=2), workers=4)
print("triangles:", tri.aggregate[0], "in", tri.supersteps, "supersteps")

# k-core peeling mutates the topology: deleted edges go to the edge log
core = run_job(undirected, KCore(k=2), workers=3)
print("2-core size:", sum(not x.deleted for x in core.values.values()))
