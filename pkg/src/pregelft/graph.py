"""Graph representation, hash partitioning, vertex state and topology mutations.

Graph text format, one vertex per line::

    <id> TAB <neighbor> SPACE <neighbor> ...

An empty neighbor list is allowed (``"5\\t"``).  Adjacency lists keep the
order in which they were written or mutated; message regeneration depends on
that order being reproducible.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, NamedTuple, TextIO

from .errors import GraphParseError, ReplayCorruptionError

VertexId = int
AdjList = list


def partition(v: VertexId, n: int) -> int:
    """Rank of the worker owning vertex `v` among `n` workers."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return v % n


@dataclass(slots=True)
class VertexState:
    """Mutable per-vertex state owned by exactly one worker.

    ``comp`` records whether compute() ran on the vertex in the most recent
    superstep; it is what gates message regeneration after a rollback.
    """

    id: VertexId
    value: Any
    adj: list = field(default_factory=list)
    active: bool = True
    comp: bool = False


class Message(NamedTuple):
    target: VertexId
    payload: Any


class MutationKind(enum.IntEnum):
    ADD_EDGE = 0
    DELETE_EDGE = 1


class MutationRequest(NamedTuple):
    kind: MutationKind
    owner: VertexId
    neighbor: VertexId

    @classmethod
    def add(cls, owner: VertexId, neighbor: VertexId) -> "MutationRequest":
        return cls(MutationKind.ADD_EDGE, owner, neighbor)

    @classmethod
    def delete(cls, owner: VertexId, neighbor: VertexId) -> "MutationRequest":
        return cls(MutationKind.DELETE_EDGE, owner, neighbor)


def apply_mutation_inplace(adj: list, req: MutationRequest) -> None:
    if req.kind == MutationKind.ADD_EDGE:
        adj.append(req.neighbor)
        return
    try:
        adj.remove(req.neighbor)  # first occurrence only
    except ValueError:
        raise ReplayCorruptionError(
            f"cannot delete edge {req.owner}->{req.neighbor}: neighbor absent"
        ) from None


def apply_mutation(adj: Iterable[VertexId], req: MutationRequest) -> list:
    """Return a copy of `adj` with `req` applied.

    AddEdge appends; DeleteEdge removes the first occurrence and raises
    :class:`ReplayCorruptionError` when the neighbor is absent.
    """
    out = list(adj)
    apply_mutation_inplace(out, req)
    return out


def _iter_lines(source: str | TextIO) -> Iterator[str]:
    if isinstance(source, str):
        source = io.StringIO(source)
    for line in source:
        yield line.rstrip("\r\n")


def parse_graph(source: str | TextIO) -> list[tuple[VertexId, list]]:
    """Parse adjacency text into ``(id, neighbors)`` records, in file order.

    Blank lines are skipped.  Raises :class:`GraphParseError` naming the
    offending line for malformed input or a repeated vertex id.
    """
    records: list[tuple[VertexId, list]] = []
    seen: set[int] = set()
    for lineno, line in enumerate(_iter_lines(source), start=1):
        if not line.strip():
            continue
        head, sep, tail = line.partition("\t")
        if not sep:
            raise GraphParseError(lineno, "expected '<id>\\t<neighbors>'")
        try:
            vid = int(head)
            neighbors = [int(tok) for tok in tail.split()]
        except ValueError:
            raise GraphParseError(lineno, f"non-integer token in {line!r}") from None
        if vid < 0 or any(u < 0 for u in neighbors):
            raise GraphParseError(lineno, "vertex ids must be non-negative")
        if vid in seen:
            raise GraphParseError(lineno, f"duplicate vertex id {vid}")
        seen.add(vid)
        records.append((vid, neighbors))
    return records


def format_graph(records: Iterable[tuple[VertexId, Iterable[VertexId]]]) -> str:
    return "".join(
        f"{vid}\t{' '.join(str(u) for u in adj)}\n" for vid, adj in records
    )


def read_graph(path) -> list[tuple[VertexId, list]]:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh)


def write_graph(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(records))
