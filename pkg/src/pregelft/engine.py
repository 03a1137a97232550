"""Per-worker superstep execution.

Each superstep is computation followed by communication: every compute call
of the superstep returns before any message leaves the worker, so when a
worker notices a failure it has already partially committed the superstep
(``worker.s == i``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, NamedTuple, Optional, Sequence

from .errors import GraphError, InvariantViolation
from .graph import Message, MutationRequest, VertexState
from .program import ComputeContext, VertexProgram


class EdgeLogRecord(NamedTuple):
    superstep: int
    req: MutationRequest


@dataclass
class Worker:
    rank: int
    n: int
    vertices: dict = field(default_factory=dict)  # id -> VertexState, ascending id
    s: int = 0
    incoming: dict = field(default_factory=dict)  # id -> [payload], input of superstep s+1
    inbox: dict = field(default_factory=dict)  # sender rank -> [Message]
    out_queues: list = field(default_factory=list)  # per target rank, combined
    edge_buffer: list = field(default_factory=list)  # mutations since last checkpoint
    status: str = "running"

    def clear_queues(self) -> None:
        self.incoming = {}
        self.inbox = {}
        self.out_queues = []

    def deliver(self, sender: int, batch: Sequence[Message]) -> None:
        if batch:
            self.inbox.setdefault(sender, []).extend(batch)

    def assemble(self) -> None:
        """Turn received batches into per-vertex inputs, ordered by sender rank."""
        incoming: dict = {}
        for sender in sorted(self.inbox):
            for target, payload in self.inbox[sender]:
                lst = incoming.get(target)
                if lst is None:
                    incoming[target] = [payload]
                else:
                    lst.append(payload)
        self.incoming = incoming
        self.inbox = {}


@dataclass
class SuperstepResult:
    superstep: int
    rank: int
    active_count: int
    sent_message_count: int  # emitted before combining
    combined_count: int  # what actually goes on the wire
    partial_aggregate: Any
    mask_flag: bool
    computed_count: int = 0


@dataclass
class GlobalControl:
    superstep: int
    halt: bool
    global_aggregate: Any
    checkpoint_now: bool
    masked: bool


@dataclass(frozen=True)
class CheckpointPolicy:
    """Checkpoint every `every_supersteps` supersteps or every `every_seconds`."""

    every_supersteps: Optional[int] = 10
    every_seconds: Optional[float] = None

    def __post_init__(self):
        if (self.every_supersteps is None) == (self.every_seconds is None):
            raise ValueError("set exactly one of every_supersteps / every_seconds")
        if self.every_supersteps is not None and self.every_supersteps < 1:
            raise ValueError("checkpoint interval must be >= 1")
        if self.every_seconds is not None and self.every_seconds <= 0:
            raise ValueError("checkpoint interval must be > 0")


def should_checkpoint(policy: CheckpointPolicy, i: int, *, last_checkpoint: int = 0,
                      elapsed: float = 0.0, masked: bool = False) -> bool:
    """Decide whether fully committed superstep `i` is checkpointed.

    A masked superstep never is; a checkpoint that falls due on one is
    written at the first unmasked superstep after it.
    """
    if masked:
        return False
    if policy.every_supersteps is not None:
        d = policy.every_supersteps
        return i // d > last_checkpoint // d
    return elapsed > policy.every_seconds


class Trace:
    """Ordered event sink used to check protocol invariants after a run."""

    def __init__(self):
        self.events: list[tuple] = []

    def __call__(self, kind: str, **info) -> None:
        self.events.append((kind, info))

    def of_kind(self, kind: str) -> list[dict]:
        return [info for k, info in self.events if k == kind]


def check_compute_before_send(events: Iterable[tuple]) -> None:
    """Raise if any worker sent superstep-i messages before finishing its computation."""
    finished: set = set()
    for kind, info in events:
        key = (info.get("epoch"), info.get("rank"), info.get("superstep"))
        if kind == "compute-end":
            finished.add(key)
        elif kind == "send" and info.get("computed") and key not in finished:
            raise InvariantViolation(f"send before compute finished: {info}")


def combine(queue: dict, combiner: Optional[Callable]) -> list[Message]:
    """Collapse a ``{target: [payloads]}`` queue into wire messages.

    With a combiner there is one message per target, folded left in emission
    order (ascending source id); the output is sorted by target.
    """
    out = []
    for target in sorted(queue):
        payloads = queue[target]
        if combiner is None:
            out.extend(Message(target, p) for p in payloads)
        else:
            acc = payloads[0]
            for p in payloads[1:]:
                acc = combiner(acc, p)
            out.append(Message(target, acc))
    return out


def run_superstep(worker: Worker, i: int, program: VertexProgram, *,
                  aggregator_input=None, num_vertices: int = 0,
                  trace: Optional[Callable] = None, epoch: int = 0) -> SuperstepResult:
    """Run compute() for superstep `i` on every vertex that is active or has input.

    Fills ``worker.out_queues`` with combined per-rank batches and advances
    ``worker.s`` to `i`.  Mutations are appended to the worker's edge buffer.
    """
    if worker.s != i - 1:
        raise InvariantViolation(
            f"worker {worker.rank} at state {worker.s} cannot compute superstep {i}"
        )
    n = worker.n
    queues: list[dict] = [{} for _ in range(n)]
    emitted = 0

    def sink(target, payload):
        nonlocal emitted
        emitted += 1
        q = queues[target % n]
        lst = q.get(target)
        if lst is None:
            q[target] = [payload]
        else:
            lst.append(payload)

    ctx = ComputeContext(program, i, aggregator_input=aggregator_input,
                         num_vertices=num_vertices, sink=sink)
    if trace is not None:
        trace("compute-start", rank=worker.rank, superstep=i, epoch=epoch)
    incoming, worker.incoming = worker.incoming, {}
    computed = 0
    edge_buffer = worker.edge_buffer
    for vid, v in worker.vertices.items():
        msgs = incoming.get(vid)
        if v.active or msgs:
            ctx.run(v, msgs or [])
            computed += 1
            if ctx._mutations:
                edge_buffer.extend(EdgeLogRecord(i, r) for r in ctx.take_mutations())
        else:
            v.comp = False
    worker.out_queues = [combine(q, program.combiner) for q in queues]
    worker.s = i
    if trace is not None:
        trace("compute-end", rank=worker.rank, superstep=i, epoch=epoch)
    return SuperstepResult(
        superstep=i,
        rank=worker.rank,
        active_count=sum(1 for v in worker.vertices.values() if v.active),
        sent_message_count=emitted,
        combined_count=sum(len(b) for b in worker.out_queues),
        partial_aggregate=ctx.partial_aggregate,
        mask_flag=ctx.masked or not program.lwcp_applicable(i),
        computed_count=computed,
    )


def full_commit(results: Sequence[SuperstepResult], i: int, program: VertexProgram,
                policy: CheckpointPolicy, *, last_checkpoint: int = 0,
                elapsed: float = 0.0, defer_on_mask: bool = True) -> GlobalControl:
    """Merge per-worker results of superstep `i` into the global control record."""
    agg = program.aggregator
    global_agg = None
    if agg is not None:
        global_agg = agg.fold(r.partial_aggregate for r in sorted(results, key=lambda r: r.rank))
    masked = any(r.mask_flag for r in results) or not program.lwcp_applicable(i)
    halt = all(r.active_count == 0 for r in results) and \
        sum(r.combined_count for r in results) == 0
    checkpoint_now = (not halt) and should_checkpoint(
        policy, i, last_checkpoint=last_checkpoint, elapsed=elapsed,
        masked=masked and defer_on_mask,
    )
    return GlobalControl(i, halt, global_agg, checkpoint_now, masked)


def final_aggregate(program: VertexProgram, values: Iterable[Any]):
    """Fold the program's aggregator over final vertex values (job-level result)."""
    agg = program.aggregator
    if agg is None or agg.of_value is None:
        return None
    return agg.fold(agg.of_value(v) for v in values)


def build_workers(records: Sequence[tuple[int, list]], program: VertexProgram,
                  n: int) -> list[Worker]:
    """Partition a loaded graph into `n` workers holding initial vertex state."""
    num_vertices = len(records)
    known = {vid for vid, _ in records}
    workers = [Worker(rank=r, n=n) for r in range(n)]
    for vid, adj in sorted(records, key=lambda rec: rec[0]):
        for u in adj:
            if u not in known:
                raise GraphError(f"vertex {vid} links to undeclared vertex {u}")
        v = VertexState(vid, program.init_value(vid, adj, num_vertices), list(adj))
        workers[vid % n].vertices[vid] = v
    return workers
