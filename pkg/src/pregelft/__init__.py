"""Pregel-style graph processing with checkpoint- and log-based fault recovery."""

from .algorithms import (
    HashMin,
    KCore,
    PageRank,
    RequestRespond,
    TriangleCount,
    hashmin_program,
    kcore_program,
    pagerank_program,
    reqres_program,
    triangle_program,
)
from .cluster import FailureEvent, FailureScenario, Job, JobResult, Phase, Strategy, run_job
from .engine import CheckpointPolicy, Trace
from .graph import Message, MutationRequest, VertexState, parse_graph, partition, read_graph
from .harness import (
    GenSpec,
    MetricsReport,
    RunConfig,
    emit,
    generate_graph,
    parse_report,
    run,
    run_with_oracle,
    verify_equivalence,
)
from .program import Aggregator, ComputeContext, StructCodec, VertexProgram

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "CheckpointPolicy",
    "ComputeContext",
    "emit",
    "FailureEvent",
    "FailureScenario",
    "generate_graph",
    "GenSpec",
    "HashMin",
    "hashmin_program",
    "Job",
    "JobResult",
    "KCore",
    "kcore_program",
    "Message",
    "MetricsReport",
    "MutationRequest",
    "PageRank",
    "pagerank_program",
    "parse_graph",
    "parse_report",
    "partition",
    "Phase",
    "read_graph",
    "reqres_program",
    "RequestRespond",
    "run",
    "run_job",
    "run_with_oracle",
    "RunConfig",
    "Strategy",
    "StructCodec",
    "Trace",
    "triangle_program",
    "TriangleCount",
    "verify_equivalence",
    "VertexProgram",
    "VertexState",
]
