"""Built-in vertex programs.

* PageRank: always-active; messages are a pure function of the rank.
* Hash-Min connected components: traversal style; the value carries an
  ``updated`` flag so emissions depend on state alone.
* Multi-round triangle counting: the value carries the pair iterators; the
  emission step walks them backwards so it can be replayed from the saved
  state.
* Request-respond echo: responding supersteps are masked.
* k-core pruning: deletes edges, exercising the edge-mutation log.
"""

from __future__ import annotations

import operator
from typing import NamedTuple, Sequence

from .program import Aggregator, StructCodec, VertexProgram


class PageRank(VertexProgram):
    name = "pagerank"
    combiner = staticmethod(operator.add)
    value_codec = StructCodec("d")
    message_codec = StructCodec("d")

    def __init__(self, damping: float = 0.85, max_supersteps: int = 30):
        if not 0.0 < damping < 1.0:
            raise ValueError(f"damping must be in (0, 1), got {damping}")
        if max_supersteps < 1:
            raise ValueError("max_supersteps must be >= 1")
        self.damping = damping
        self.max_supersteps = max_supersteps

    def init_value(self, vid, adj, num_vertices):
        return 1.0 / num_vertices

    def compute(self, ctx, vertex, msgs):
        if ctx.superstep > 1:
            total = 0.0
            for m in msgs:
                total += m
            ctx.set_value((1.0 - self.damping) / ctx.num_vertices + self.damping * total)
        if ctx.superstep < self.max_supersteps:
            adj = vertex.adj
            if adj:  # sinks keep their mass
                ctx.emit_all(adj, vertex.value / len(adj))
        else:
            ctx.vote_to_halt()


def pagerank_program(damping: float = 0.85, max_supersteps: int = 30) -> PageRank:
    return PageRank(damping, max_supersteps)


class HashMinValue(NamedTuple):
    min_id: int
    updated: bool


class HashMin(VertexProgram):
    name = "hashmin"
    combiner = staticmethod(min)
    value_codec = StructCodec("q?", HashMinValue)
    message_codec = StructCodec("q")

    def init_value(self, vid, adj, num_vertices):
        return HashMinValue(vid, False)

    def compute(self, ctx, vertex, msgs):
        cur = vertex.value.min_id
        if ctx.superstep == 1:
            ctx.set_value(HashMinValue(cur, True))
        else:
            best = min(msgs) if msgs else cur
            ctx.set_value(HashMinValue(min(best, cur), best < cur))
        value = vertex.value
        if value.updated:
            ctx.emit_all(vertex.adj, value.min_id)
        ctx.vote_to_halt()


def hashmin_program() -> HashMin:
    return HashMin()


class TriangleValue(NamedTuple):
    count: int
    outer_idx: int
    inner_idx: int
    batch: int  # pairs covered by the latest odd superstep
    done: bool


def higher_neighbors(vid: int, adj: Sequence[int]) -> list[int]:
    """Distinct neighbors with a larger id, ascending: the v2/v3 candidates."""
    return sorted({u for u in adj if u > vid})


def next_pair(j: int, k: int, m: int) -> tuple[int, int]:
    if k + 1 < m:
        return j, k + 1
    return j + 1, j + 2


def prev_pair(j: int, k: int, m: int) -> tuple[int, int]:
    if k - 1 > j:
        return j, k - 1
    return j - 1, m - 1


def advance_pairs(j: int, k: int, m: int, budget: int) -> tuple[int, int, int]:
    """Move the iterator forward over at most `budget` pairs.

    Returns the new ``(outer, inner)`` and the number of pairs covered.
    """
    walked = 0
    while walked < budget and k < m:
        j, k = next_pair(j, k, m)
        walked += 1
    return j, k, walked


def forward_requests(vid, higher, old: TriangleValue, new: TriangleValue):
    """Requests covered between two iterator states, walking forward."""
    m = len(higher)
    j, k = old.outer_idx, old.inner_idx
    out = []
    while (j, k) != (new.outer_idx, new.inner_idx):
        out.append((higher[j], (vid, higher[k])))
        j, k = next_pair(j, k, m)
    return out


def reverse_requests(vid, higher, value: TriangleValue):
    """Requests of the latest round, recovered by walking back from `value`."""
    m = len(higher)
    j, k = value.outer_idx, value.inner_idx
    out = []
    for _ in range(value.batch):
        j, k = prev_pair(j, k, m)
        out.append((higher[j], (vid, higher[k])))
    return out


def _merge_tri(a, b):
    return a[0] + b[0], a[1] and b[1]


class TriangleCount(VertexProgram):
    """Triangle counting in rounds of at most ``C * |adj(v1)|`` requests per vertex.

    Odd supersteps: v1 advances its iterators (state), then re-walks them
    backwards to send ``(v1, v3)`` to v2 for each pair v1 < v2 < v3.  Even
    supersteps: v2 counts requests whose v3 is its neighbor.
    """

    name = "triangle"
    value_codec = StructCodec("QIII?", TriangleValue)
    message_codec = StructCodec("QQ")
    aggregator = Aggregator(
        identity=(0, True),
        merge=_merge_tri,
        codec=StructCodec("Q?"),
        of_value=lambda v: (v.count, v.done),
    )

    def __init__(self, c: int = 1):
        if c < 1:
            raise ValueError(f"C must be >= 1, got {c}")
        self.c = c

    def init_value(self, vid, adj, num_vertices):
        m = len(higher_neighbors(vid, adj))
        return TriangleValue(0, 0, 1, 0, m < 2)

    def compute(self, ctx, vertex, msgs):
        vid = vertex.id
        if ctx.superstep % 2 == 1:
            higher = higher_neighbors(vid, vertex.adj)
            v = vertex.value
            j, k, walked = advance_pairs(
                v.outer_idx, v.inner_idx, len(higher), self.c * len(vertex.adj)
            )
            ctx.set_value(v._replace(outer_idx=j, inner_idx=k, batch=walked,
                                     done=k >= len(higher)))
            v = vertex.value
            for target, payload in reverse_requests(vid, higher, v):
                ctx.emit(target, payload)
        else:
            v = vertex.value
            if msgs:
                nbrs = set(vertex.adj)
                hits = sum(1 for _, v3 in msgs if v3 in nbrs)
                ctx.set_value(v._replace(count=v.count + hits, batch=0))
            else:
                ctx.set_value(v._replace(batch=0))
            v = vertex.value
        ctx.aggregate((v.count, v.done))
        if v.done:
            ctx.vote_to_halt()


def triangle_program(c: int = 1) -> TriangleCount:
    return TriangleCount(c)


class ReqResValue(NamedTuple):
    val: int
    acc: int


class RequestRespond(VertexProgram):
    """Echo protocol: odd supersteps request, even supersteps respond.

    Every vertex sends its id to its neighbors; each receiver answers every
    requester with its own ``val``; requesters add the answers to ``acc``.
    Responding supersteps depend on the incoming requests, so they are
    masked (per vertex, or through the superstep predicate when
    ``use_predicate`` is set).
    """

    name = "reqres"
    value_codec = StructCodec("qq", ReqResValue)
    message_codec = StructCodec("q")

    def __init__(self, rounds: int = 8, use_predicate: bool = False):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.rounds = rounds
        self.use_predicate = use_predicate

    def init_value(self, vid, adj, num_vertices):
        return ReqResValue(vid + 1, 0)

    def lwcp_applicable(self, superstep):
        if self.use_predicate:
            return superstep % 2 == 1
        return True

    def compute(self, ctx, vertex, msgs):
        i = ctx.superstep
        if i % 2 == 1:
            if msgs:
                ctx.set_value(vertex.value._replace(acc=vertex.value.acc + sum(msgs)))
            if i < 2 * self.rounds + 1:
                ctx.emit_all(vertex.adj, vertex.id)
            else:
                ctx.vote_to_halt()
        else:
            if not self.use_predicate:
                ctx.mask_superstep()
            val = vertex.value.val
            for requester in msgs:
                ctx.emit(requester, val)


def reqres_program(rounds: int = 8, use_predicate: bool = False) -> RequestRespond:
    return RequestRespond(rounds, use_predicate)


class KCoreValue(NamedTuple):
    deleted: bool
    newly: bool


class KCore(VertexProgram):
    """k-core by peeling: a vertex of degree < k leaves and tells its neighbors,
    which delete the edge back to it."""

    name = "kcore"
    value_codec = StructCodec("??", KCoreValue)
    message_codec = StructCodec("q")
    mutates_topology = True

    def __init__(self, k: int = 3):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k

    def init_value(self, vid, adj, num_vertices):
        return KCoreValue(False, False)

    def compute(self, ctx, vertex, msgs):
        for u in msgs:
            ctx.delete_edge(u)
        v = vertex.value
        if not v.deleted and len(vertex.adj) < self.k:
            ctx.set_value(KCoreValue(True, True))
        elif v.newly:
            ctx.set_value(KCoreValue(v.deleted, False))
        if vertex.value.newly:
            ctx.emit_all(vertex.adj, vertex.id)
        ctx.vote_to_halt()


def kcore_program(k: int = 3) -> KCore:
    return KCore(k)


PROGRAMS = {
    "pagerank": pagerank_program,
    "hashmin": hashmin_program,
    "triangle": triangle_program,
    "reqres": reqres_program,
    "kcore": kcore_program,
}
