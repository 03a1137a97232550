"""The vertex-centric programming contract.

A program supplies a single ``compute(ctx, vertex, msgs)`` written as two
steps: first update the vertex state from the incoming messages (through
``ctx.set_value`` / ``ctx.vote_to_halt`` / ``ctx.mutate``), then emit
messages computed *only* from the updated state, read back through
``vertex.value`` and ``vertex.adj``.  Written that way, the same callback can
be replayed in regeneration mode, where state updates are ignored and only
the emissions survive, to rebuild the messages of a checkpointed superstep.

Supersteps whose emissions depend on the incoming messages must be masked,
either by a vertex calling ``ctx.mask_superstep()`` or by the program's
``lwcp_applicable`` predicate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, Sequence

from .errors import ContractViolation, ProgramError
from .graph import Message, MutationRequest, VertexState, apply_mutation_inplace


class StructCodec:
    """Fixed-layout little-endian codec for scalar, tuple or NamedTuple values.

    Single-field formats map to a scalar; wider ones to a plain tuple unless a
    `factory` (e.g. a NamedTuple class) is given.
    """

    def __init__(self, fmt: str, factory: Optional[Callable] = None):
        self._struct = struct.Struct("<" + fmt.lstrip("<"))
        self._factory = factory
        self._scalar = factory is None and len(self._struct.unpack(bytes(self._struct.size))) == 1

    @property
    def size(self) -> int:
        return self._struct.size

    def encode(self, value) -> bytes:
        if self._scalar:
            return self._struct.pack(value)
        return self._struct.pack(*value)

    def decode(self, data: bytes):
        fields = self._struct.unpack(data)
        if self._scalar:
            return fields[0]
        if self._factory is None:
            return fields
        return self._factory(*fields)


EMPTY_CODEC = StructCodec("0s")


@dataclass(frozen=True)
class Aggregator:
    """Global reduction: vertices contribute partial values, workers merge them.

    `merge` must be associative with `identity` as its neutral element.
    `of_value`, when given, maps a final vertex value to a partial so the
    harness can fold a job-level result over every vertex.
    """

    identity: Any
    merge: Callable[[Any, Any], Any]
    codec: StructCodec
    of_value: Optional[Callable[[Any], Any]] = None

    def fold(self, values: Iterable[Any]):
        acc = self.identity
        for v in values:
            acc = self.merge(acc, v)
        return acc


class VertexProgram:
    """Base class for vertex programs.  Instances are stateless and shared."""

    name = "program"
    combiner: Optional[Callable[[Any, Any], Any]] = None
    aggregator: Optional[Aggregator] = None
    value_codec: StructCodec = EMPTY_CODEC
    message_codec: StructCodec = EMPTY_CODEC
    mutates_topology = False

    def init_value(self, vid: int, adj: Sequence[int], num_vertices: int):
        raise NotImplementedError

    def compute(self, ctx: "ComputeContext", vertex: VertexState, msgs: list) -> None:
        raise NotImplementedError

    def lwcp_applicable(self, superstep: int) -> bool:
        return True


class ComputeContext:
    """Per-worker handle passed to compute(); rebound to each vertex in turn.

    In regeneration mode `set_value`, `vote_to_halt`, `mutate` and
    `aggregate` are silently ignored while `emit` stays live.
    """

    __slots__ = (
        "superstep", "aggregator_input", "num_vertices", "regeneration_mode",
        "_program", "_sink", "_vertex", "_mutations", "_partial", "masked",
    )

    def __init__(self, program: VertexProgram, superstep: int, *,
                 aggregator_input=None, num_vertices: int = 0,
                 regeneration_mode: bool = False,
                 sink: Optional[Callable[[int, Any], None]] = None):
        self._program = program
        self.superstep = superstep
        self.aggregator_input = aggregator_input
        self.num_vertices = num_vertices
        self.regeneration_mode = regeneration_mode
        self._sink = sink
        self._vertex: Optional[VertexState] = None
        self._mutations: list = []
        agg = program.aggregator
        self._partial = agg.identity if agg is not None else None
        self.masked = False

    # -- sinks available to compute() ---------------------------------

    def emit(self, target: int, payload) -> None:
        self._sink(target, payload)

    def emit_all(self, targets: Iterable[int], payload) -> None:
        sink = self._sink
        for t in targets:
            sink(t, payload)

    def set_value(self, value) -> None:
        if not self.regeneration_mode:
            self._vertex.value = value

    def vote_to_halt(self) -> None:
        if not self.regeneration_mode:
            self._vertex.active = False

    def mutate(self, req: MutationRequest) -> None:
        # Applied to the owner's list right away so the emission step sees
        # the post-mutation adjacency, exactly as regeneration will.
        if self.regeneration_mode:
            return
        v = self._vertex
        if req.owner != v.id:
            raise ContractViolation(
                f"vertex {v.id} may only mutate its own adjacency list, not {req.owner}"
            )
        apply_mutation_inplace(v.adj, req)
        self._mutations.append(req)

    def add_edge(self, neighbor: int) -> None:
        self.mutate(MutationRequest.add(self._vertex.id, neighbor))

    def delete_edge(self, neighbor: int) -> None:
        self.mutate(MutationRequest.delete(self._vertex.id, neighbor))

    def aggregate(self, partial) -> None:
        if not self.regeneration_mode:
            self._partial = self._program.aggregator.merge(self._partial, partial)

    def mask_superstep(self) -> None:
        self.masked = True

    # -- engine side --------------------------------------------------

    def take_mutations(self) -> list:
        out, self._mutations = self._mutations, []
        return out

    @property
    def partial_aggregate(self):
        return self._partial

    def run(self, vertex: VertexState, msgs: list) -> None:
        """Invoke compute() on `vertex` (normal mode), handling reactivation."""
        if msgs and not vertex.active:
            vertex.active = True
        vertex.comp = True
        self._vertex = vertex
        try:
            self._program.compute(self, vertex, msgs)
        except Exception as exc:  # noqa: BLE001 - rewrapped with location
            raise ProgramError(vertex.id, self.superstep, exc) from exc


def invoke_compute(program: VertexProgram, ctx: ComputeContext,
                   vertex: VertexState, msgs: Sequence):
    """Run compute() on one vertex.

    Returns ``(vertex, messages, mutations, masked)``.  The vertex is
    reactivated first if it is halted and has messages, and its comp flag is
    set.
    """
    if ctx.regeneration_mode:
        raise ContractViolation("invoke_compute requires regeneration_mode=False")
    if not vertex.active and not msgs:
        raise ContractViolation(
            f"vertex {vertex.id} is halted and has no messages; compute must not run"
        )
    out: list[Message] = []
    saved_sink = ctx._sink
    ctx._sink = lambda t, p: out.append(Message(t, p))
    was_masked, ctx.masked = ctx.masked, False
    try:
        ctx.run(vertex, list(msgs))
        masked = ctx.masked
    finally:
        ctx._sink = saved_sink
        ctx.masked = was_masked or ctx.masked
    return vertex, out, ctx.take_mutations(), masked


def regenerate_messages(program: VertexProgram, ctx: ComputeContext,
                        vertex: VertexState) -> list[Message]:
    """Re-emit the messages `vertex` sent in superstep ``ctx.superstep``.

    `vertex` must hold the state recorded *after* that superstep.  Vertices
    whose comp flag is false produce nothing.  The vertex state is left
    untouched.
    """
    if not ctx.regeneration_mode:
        raise ContractViolation("regenerate_messages requires regeneration_mode=True")
    if not program.lwcp_applicable(ctx.superstep):
        raise ContractViolation(
            f"superstep {ctx.superstep} is masked; its messages cannot be regenerated"
        )
    if not vertex.comp:
        return []
    out: list[Message] = []
    saved_sink, saved_masked = ctx._sink, ctx.masked
    ctx._sink = lambda t, p: out.append(Message(t, p))
    ctx.masked = False
    ctx._vertex = vertex
    before = (vertex.value, vertex.active, len(vertex.adj))
    try:
        program.compute(ctx, vertex, [])
    except Exception as exc:  # noqa: BLE001
        raise ProgramError(vertex.id, ctx.superstep, exc) from exc
    finally:
        masked, ctx.masked = ctx.masked, saved_masked
        ctx._sink = saved_sink
    if masked:
        raise ContractViolation(
            f"superstep {ctx.superstep} is masked; its messages cannot be regenerated"
        )
    assert before == (vertex.value, vertex.active, len(vertex.adj))
    return out


def lwcp_applicable(program: VertexProgram, superstep: int,
                    vertex_masks: Iterable[bool] = ()) -> bool:
    """True unless the program's predicate or any vertex masked `superstep`."""
    if not program.lwcp_applicable(superstep):
        return False
    return not any(vertex_masks)
