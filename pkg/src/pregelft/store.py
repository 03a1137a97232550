"""Durable checkpoint store.

Layout under the store root::

    CP_<i>/worker_<rank>.ckpt   one file per worker
    CP_<i>/COMMIT               written once every worker has finished; holds
                                the global control record of superstep i
    E_<rank>.elog               append-only edge-mutation log

Checkpoint file (little-endian)::

    header  magic "FTCP", version u16, kind u8, superstep u32, vertex count u64
    record  id u64, value len u32 + bytes, active u8,
            comp u8                          (light only)
            neighbor count u32 + ids u64     (initial / heavy)
            message count u32 + (len u32 + bytes)*   (heavy only)

Edge log record: superstep u32, kind u8, owner u64, neighbor u64.

The store is owned by the harness and survives every simulated failure.
CP_0 is never deleted: it is the edge base for light checkpoints and the
rollback target before the first real checkpoint.
"""

from __future__ import annotations

import enum
import json
import os
import shutil
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .engine import EdgeLogRecord, Worker
from .errors import StoreError
from .graph import MutationKind, MutationRequest, apply_mutation_inplace
from .program import VertexProgram

MAGIC = b"FTCP"
VERSION = 1
HEADER = struct.Struct("<4sHBIQ")
EDGE_RECORD = struct.Struct("<IBQQ")
_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class CheckpointKind(enum.IntEnum):
    INITIAL = 0
    HEAVY = 1
    LIGHT = 2


@dataclass
class VertexRecord:
    id: int
    value: Any
    active: bool
    comp: bool = False
    adj: Optional[list] = None
    messages: Optional[list] = None


@dataclass
class CheckpointData:
    kind: CheckpointKind
    superstep: int
    records: list


def encode_checkpoint(worker: Worker, i: int, kind: CheckpointKind,
                      program: VertexProgram) -> bytes:
    vcodec, mcodec = program.value_codec, program.message_codec
    buf = bytearray(HEADER.pack(MAGIC, VERSION, kind, i, len(worker.vertices)))
    incoming = worker.incoming
    for vid, v in worker.vertices.items():
        val = vcodec.encode(v.value)
        buf += _U64.pack(vid)
        buf += _U32.pack(len(val))
        buf += val
        buf += _U8.pack(v.active)
        if kind == CheckpointKind.LIGHT:
            buf += _U8.pack(v.comp)
            continue
        buf += _U32.pack(len(v.adj))
        buf += struct.pack(f"<{len(v.adj)}Q", *v.adj)
        if kind == CheckpointKind.HEAVY:
            msgs = incoming.get(vid, ())
            buf += _U32.pack(len(msgs))
            for p in msgs:
                data = mcodec.encode(p)
                buf += _U32.pack(len(data))
                buf += data
    return bytes(buf)


def decode_checkpoint(data: bytes, program: VertexProgram) -> CheckpointData:
    try:
        magic, version, kind, step, count = HEADER.unpack_from(data, 0)
        if magic != MAGIC or version != VERSION:
            raise StoreError(f"bad checkpoint header {magic!r} v{version}")
        kind = CheckpointKind(kind)
        vcodec, mcodec = program.value_codec, program.message_codec
        off = HEADER.size
        records = []
        for _ in range(count):
            (vid,) = _U64.unpack_from(data, off)
            (vlen,) = _U32.unpack_from(data, off + 8)
            off += 12
            value = vcodec.decode(data[off:off + vlen])
            off += vlen
            rec = VertexRecord(vid, value, bool(data[off]))
            off += 1
            if kind == CheckpointKind.LIGHT:
                rec.comp = bool(data[off])
                off += 1
            else:
                (deg,) = _U32.unpack_from(data, off)
                off += 4
                rec.adj = list(struct.unpack_from(f"<{deg}Q", data, off))
                off += 8 * deg
                if kind == CheckpointKind.HEAVY:
                    (mcount,) = _U32.unpack_from(data, off)
                    off += 4
                    msgs = []
                    for _ in range(mcount):
                        (mlen,) = _U32.unpack_from(data, off)
                        off += 4
                        msgs.append(mcodec.decode(data[off:off + mlen]))
                        off += mlen
                    rec.messages = msgs
            records.append(rec)
    except struct.error as exc:
        raise StoreError(f"truncated checkpoint file: {exc}") from exc
    if off != len(data):
        raise StoreError("trailing bytes in checkpoint file")
    return CheckpointData(kind, step, records)


def encode_edge_records(records) -> bytes:
    return b"".join(
        EDGE_RECORD.pack(r.superstep, r.req.kind, r.req.owner, r.req.neighbor)
        for r in records
    )


def decode_edge_records(data: bytes) -> list[EdgeLogRecord]:
    if len(data) % EDGE_RECORD.size:
        raise StoreError("truncated edge log")
    return [
        EdgeLogRecord(step, MutationRequest(MutationKind(kind), owner, nbr))
        for step, kind, owner, nbr in EDGE_RECORD.iter_unpack(data)
    ]


class DurableStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- paths --------------------------------------------------------

    def cp_dir(self, i: int) -> Path:
        return self.root / f"CP_{i}"

    def cp_path(self, i: int, rank: int) -> Path:
        return self.cp_dir(i) / f"worker_{rank}.ckpt"

    def edge_log_path(self, rank: int) -> Path:
        return self.root / f"E_{rank}.elog"

    def checkpoint_steps(self) -> list[int]:
        steps = []
        for p in self.root.glob("CP_*"):
            try:
                steps.append(int(p.name[3:]))
            except ValueError:
                continue
        return sorted(steps)

    def committed_steps(self) -> list[int]:
        return [i for i in self.checkpoint_steps() if (self.cp_dir(i) / "COMMIT").exists()]

    def latest_committed(self) -> int:
        steps = self.committed_steps()
        if not steps:
            raise StoreError("no committed checkpoint in the store")
        return steps[-1]

    # -- writing ------------------------------------------------------

    def write_checkpoint(self, worker: Worker, i: int, kind: CheckpointKind,
                         program: VertexProgram, *, last_committed: int = 0) -> int:
        """Write ``CP_<i>/worker_<rank>.ckpt``; returns bytes written.

        For light checkpoints the worker's buffered mutations are appended to
        its edge log.  Records left behind by an aborted attempt (superstep
        beyond `last_committed`) are dropped first; the buffer itself is only
        cleared once the checkpoint commits.
        """
        data = encode_checkpoint(worker, i, kind, program)
        path = self.cp_path(i, worker.rank)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
        written = len(data)
        if kind == CheckpointKind.LIGHT:
            written += self.append_edge_log(worker.rank, worker.edge_buffer, last_committed)
        return written

    def append_edge_log(self, rank: int, records, last_committed: int) -> int:
        path = self.edge_log_path(rank)
        kept = [r for r in self.read_edge_log(rank) if r.superstep <= last_committed]
        new = encode_edge_records(records)
        with open(path, "wb") as fh:
            fh.write(encode_edge_records(kept))
            fh.write(new)
        return len(new)

    def commit_checkpoint(self, i: int, ranks, control: Optional[dict] = None) -> int:
        """Second barrier: mark CP[i] committed and delete older checkpoints."""
        missing = [r for r in ranks if not self.cp_path(i, r).exists()]
        if missing:
            raise StoreError(f"cannot commit CP[{i}]: ranks {missing} did not write")
        marker = self.cp_dir(i) / "COMMIT"
        tmp = marker.with_suffix(".tmp")
        tmp.write_text(json.dumps({"superstep": i, "control": control or {}}))
        os.replace(tmp, marker)
        for step in self.checkpoint_steps():
            if step not in (0, i):
                shutil.rmtree(self.cp_dir(step), ignore_errors=True)
        return i

    def discard_uncommitted(self) -> list[int]:
        dropped = []
        for step in self.checkpoint_steps():
            if not (self.cp_dir(step) / "COMMIT").exists():
                shutil.rmtree(self.cp_dir(step), ignore_errors=True)
                dropped.append(step)
        return dropped

    # -- reading ------------------------------------------------------

    def commit_control(self, i: int) -> dict:
        marker = self.cp_dir(i) / "COMMIT"
        if not marker.exists():
            raise StoreError(f"CP[{i}] is not committed")
        return json.loads(marker.read_text())["control"]

    def load_checkpoint(self, rank: int, i: int, program: VertexProgram) -> CheckpointData:
        if not (self.cp_dir(i) / "COMMIT").exists():
            raise StoreError(f"CP[{i}] is not committed")
        try:
            data = self.cp_path(i, rank).read_bytes()
        except FileNotFoundError:
            raise StoreError(f"CP[{i}] has no file for worker {rank}") from None
        return decode_checkpoint(data, program)

    def read_edge_log(self, rank: int) -> list[EdgeLogRecord]:
        path = self.edge_log_path(rank)
        if not path.exists():
            return []
        return decode_edge_records(path.read_bytes())

    def replay_edge_log(self, rank: int, program: VertexProgram, upto: int, *,
                        committed: Optional[int] = None, extra=()) -> dict:
        """Adjacency lists of `rank` as of superstep `upto`.

        Starts from CP_0 and replays edge-log records up to the committed
        checkpoint, then `extra` records (a worker's local mutation buffer)
        from after that checkpoint up to `upto`.
        """
        if committed is None:
            committed = upto
        base = self.load_checkpoint(rank, 0, program)
        adj = {rec.id: list(rec.adj) for rec in base.records}
        for rec in self.read_edge_log(rank):
            if rec.superstep <= min(upto, committed):
                apply_mutation_inplace(adj[rec.req.owner], rec.req)
        for rec in extra:
            if committed < rec.superstep <= upto:
                apply_mutation_inplace(adj[rec.req.owner], rec.req)
        return adj
