"""Per-worker local-disk logs.

Directory ``<root>/<rank>/`` holds

* ``step_<i>_to_<target>.mlog``: combined messages sent to `target` in
  superstep i (message logging, and vertex-state logging in masked
  supersteps);
* ``step_<i>.slog``: ``(id, comp, value)`` per vertex (vertex-state logging);
* ``control.log``: JSON lines with the worker's partial result and the
  global control record of each superstep it committed.

Message log: magic "FTML", superstep u32, target u32, count u64, then
(target vertex u64, payload len u32 + bytes)*.
State log: magic "FTSL", superstep u32, count u64, then
(id u64, comp u8, payload len u32 + bytes)*.

Unlike the durable store, a log directory dies with its worker.
"""

from __future__ import annotations

import json
import re
import shutil
import struct
from pathlib import Path
from typing import Iterable, Optional

from .engine import GlobalControl, SuperstepResult, combine
from .errors import ContractViolation, LogError
from .graph import Message, VertexState
from .program import ComputeContext, VertexProgram, regenerate_messages

MLOG_HEADER = struct.Struct("<4sIIQ")
SLOG_HEADER = struct.Struct("<4sIQ")
_ENTRY = struct.Struct("<QI")
_STATE_ENTRY = struct.Struct("<QBI")
_FILE_RE = re.compile(r"step_(\d+)(?:_to_(\d+))?\.(mlog|slog)$")


def encode_message_log(i: int, target: int, batch: Iterable[Message], codec) -> bytes:
    batch = list(batch)
    buf = bytearray(MLOG_HEADER.pack(b"FTML", i, target, len(batch)))
    for t, p in batch:
        data = codec.encode(p)
        buf += _ENTRY.pack(t, len(data))
        buf += data
    return bytes(buf)


def decode_message_log(data: bytes, codec) -> tuple[int, int, list[Message]]:
    try:
        magic, i, target, count = MLOG_HEADER.unpack_from(data, 0)
        if magic != b"FTML":
            raise LogError(f"bad message log magic {magic!r}")
        off = MLOG_HEADER.size
        out = []
        for _ in range(count):
            t, ln = _ENTRY.unpack_from(data, off)
            off += _ENTRY.size
            out.append(Message(t, codec.decode(data[off:off + ln])))
            off += ln
    except struct.error as exc:
        raise LogError(f"truncated message log: {exc}") from exc
    return i, target, out


def encode_state_log(i: int, vertices: Iterable[VertexState], codec) -> bytes:
    vertices = list(vertices)
    buf = bytearray(SLOG_HEADER.pack(b"FTSL", i, len(vertices)))
    for v in vertices:
        data = codec.encode(v.value)
        buf += _STATE_ENTRY.pack(v.id, v.comp, len(data))
        buf += data
    return bytes(buf)


def decode_state_log(data: bytes, codec) -> tuple[int, list[tuple]]:
    try:
        magic, i, count = SLOG_HEADER.unpack_from(data, 0)
        if magic != b"FTSL":
            raise LogError(f"bad state log magic {magic!r}")
        off = SLOG_HEADER.size
        out = []
        for _ in range(count):
            vid, comp, ln = _STATE_ENTRY.unpack_from(data, off)
            off += _STATE_ENTRY.size
            out.append((vid, bool(comp), codec.decode(data[off:off + ln])))
            off += ln
    except struct.error as exc:
        raise LogError(f"truncated state log: {exc}") from exc
    return i, out


def control_to_json(ctrl: GlobalControl, program: VertexProgram) -> dict:
    agg = program.aggregator
    return {
        "superstep": ctrl.superstep,
        "halt": ctrl.halt,
        "checkpoint": ctrl.checkpoint_now,
        "masked": ctrl.masked,
        "aggregate": None if agg is None else agg.codec.encode(ctrl.global_aggregate).hex(),
    }


def control_from_json(entry: dict, program: VertexProgram) -> GlobalControl:
    agg = program.aggregator
    value = None
    if agg is not None and entry.get("aggregate") is not None:
        value = agg.codec.decode(bytes.fromhex(entry["aggregate"]))
    return GlobalControl(entry["superstep"], entry["halt"], value,
                         entry["checkpoint"], entry["masked"])


class LocalLog:
    def __init__(self, root, rank: int, program: VertexProgram):
        self.rank = rank
        self.dir = Path(root) / str(rank)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.program = program
        self._control: dict[int, dict] = {}
        self._partials: dict[int, dict] = {}

    def wipe(self) -> None:
        """Model the loss of the machine's disk."""
        shutil.rmtree(self.dir, ignore_errors=True)
        self._control.clear()
        self._partials.clear()

    def mlog_path(self, i: int, target: int) -> Path:
        return self.dir / f"step_{i}_to_{target}.mlog"

    def slog_path(self, i: int) -> Path:
        return self.dir / f"step_{i}.slog"

    def files(self) -> list[tuple[int, str, Path]]:
        """``(superstep, 'mlog'|'slog', path)`` for every log file present."""
        out = []
        if not self.dir.exists():
            return out
        for p in self.dir.iterdir():
            m = _FILE_RE.match(p.name)
            if m:
                out.append((int(m.group(1)), m.group(3), p))
        return sorted(out)

    def logged_steps(self, kind: Optional[str] = None) -> list[int]:
        return sorted({i for i, k, _ in self.files() if kind is None or k == kind})

    # -- writing ------------------------------------------------------

    def log_outgoing(self, i: int, out_queues) -> int:
        """One message-log file per target rank for superstep `i`."""
        codec = self.program.message_codec
        total = 0
        for target, batch in enumerate(out_queues):
            data = encode_message_log(i, target, batch, codec)
            self.mlog_path(i, target).write_bytes(data)
            total += len(data)
        return total

    def log_states(self, i: int, vertices: Iterable[VertexState]) -> int:
        data = encode_state_log(i, vertices, self.program.value_codec)
        self.slog_path(i).write_bytes(data)
        return len(data)

    def _append_control(self, entry: dict) -> None:
        with open(self.dir / "control.log", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def log_partial(self, result: SuperstepResult) -> None:
        agg = self.program.aggregator
        entry = {
            "kind": "partial",
            "superstep": result.superstep,
            "active_count": result.active_count,
            "sent_message_count": result.sent_message_count,
            "combined_count": result.combined_count,
            "mask_flag": result.mask_flag,
            "aggregate": None if agg is None else agg.codec.encode(result.partial_aggregate).hex(),
        }
        self._partials[result.superstep] = entry
        self._append_control(entry)

    def record_control(self, ctrl: GlobalControl) -> None:
        entry = dict(control_to_json(ctrl, self.program), kind="global")
        self._control[ctrl.superstep] = entry
        self._append_control(entry)

    # -- reading ------------------------------------------------------

    def fetch_control(self, i: int) -> GlobalControl:
        entry = self._control.get(i)
        if entry is None:
            raise ContractViolation(f"worker {self.rank} has no control entry for superstep {i}")
        return control_from_json(entry, self.program)

    def has_control(self, i: int) -> bool:
        return i in self._control

    def logged_partial(self, i: int) -> SuperstepResult:
        entry = self._partials.get(i)
        if entry is None:
            raise LogError(f"worker {self.rank} has no partial result for superstep {i}")
        agg = self.program.aggregator
        value = None
        if agg is not None and entry["aggregate"] is not None:
            value = agg.codec.decode(bytes.fromhex(entry["aggregate"]))
        return SuperstepResult(i, self.rank, entry["active_count"],
                               entry["sent_message_count"], entry["combined_count"],
                               value, entry["mask_flag"])

    def has_messages(self, i: int) -> bool:
        return self.mlog_path(i, 0).exists()

    def load_messages(self, i: int, target: int) -> list[Message]:
        path = self.mlog_path(i, target)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise LogError(f"missing message log {path.name} on worker {self.rank}") from None
        return decode_message_log(data, self.program.message_codec)[2]

    def load_states(self, i: int) -> list[tuple]:
        path = self.slog_path(i)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise LogError(f"missing state log {path.name} on worker {self.rank}") from None
        return decode_state_log(data, self.program.value_codec)[1]

    def load_for_forward(self, i: int, targets: Iterable[int], n: int, *,
                         adjacency: Optional[dict] = None,
                         num_vertices: int = 0, combiner=None) -> dict[int, list[Message]]:
        """Messages this worker sent in superstep `i`, for the requested target ranks only.

        Uses the message logs when they exist, otherwise regenerates from the
        state log using `adjacency` (vertex id -> adjacency list as of
        superstep i).
        """
        targets = sorted(set(targets))
        if not targets:
            return {}
        if self.has_messages(i):
            return {t: self.load_messages(i, t) for t in targets}
        states = self.load_states(i)
        return regenerate_batches(self.program, i, states, adjacency, n, targets,
                                  num_vertices=num_vertices)

    # -- garbage collection -------------------------------------------

    def gc(self, strategy: str, s_cp: int) -> int:
        """Delete obsolete log files after CP[s_cp] commits.

        Message logging drops every superstep <= s_cp; vertex-state logging
        keeps superstep s_cp itself for error handling.
        """
        keep_cp = strategy.lower() == "lwlog"
        deleted = 0
        for i, _, path in self.files():
            if i < s_cp or (i == s_cp and not keep_cp):
                path.unlink(missing_ok=True)
                deleted += 1
        return deleted


def regenerate_batches(program: VertexProgram, i: int, states, adjacency: dict, n: int,
                       targets: Iterable[int], *, num_vertices: int = 0,
                       aggregator_input=None) -> dict[int, list[Message]]:
    """Re-emit superstep-`i` messages from ``(id, comp, value)`` states and combine them.

    Only batches for the requested target ranks are returned.
    """
    wanted = set(targets)
    queues: dict[int, dict] = {t: {} for t in wanted}
    ctx = ComputeContext(program, i, aggregator_input=aggregator_input,
                         num_vertices=num_vertices, regeneration_mode=True)
    for vid, comp, value in sorted(states, key=lambda s: s[0]):
        if not comp:
            continue
        v = VertexState(vid, value, adjacency[vid], active=True, comp=True)
        for target, payload in regenerate_messages(program, ctx, v):
            q = queues.get(target % n)
            if q is not None:
                q.setdefault(target, []).append(payload)
    return {t: combine(queues[t], program.combiner) for t in sorted(wanted)}
