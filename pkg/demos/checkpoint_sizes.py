"""
Heavyweight versus lightweight checkpoints
==========================================

A heavyweight checkpoint stores vertex values, adjacency lists and the
incoming messages.  A lightweight one stores only (value, active, comp) per
vertex: edges come from the initial checkpoint plus the edge log and
messages are regenerated from the states.
"""

import tempfile
from pathlib import Path

from pregelft import Job, PageRank, generate_graph

records = generate_graph(5000, 50_000, seed=4)  # average degree 10

sizes = {}
with tempfile.TemporaryDirectory() as tmp:
    for strategy in ("hwcp", "lwcp"):
        job = Job(records, PageRank(max_supersteps=12), strategy=strategy, workers=8,
                  root=Path(tmp) / strategy)
        job.run()
        files = [job.store.cp_path(10, r) for r in range(8)]
        sizes[strategy] = sum(p.stat().st_size for p in files)
        print(f"{strategy}: CP[10] is {sizes[strategy]:,} bytes")

print(f"light / heavy = {sizes['lwcp'] / sizes['hwcp']:.3f}")
