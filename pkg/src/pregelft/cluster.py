"""Simulated worker cluster with scripted failures and four recovery strategies.

The process-management primitives of a fault-tolerant MPI runtime (revoke,
shrink, spawn + merge) are modelled as plain functions over rank sets; the
non-local jump back into the main loop becomes an explicit worker status
(running -> error-handling -> recovering -> running).

Strategies:

* ``hwcp``  heavy checkpoints (values, edges, received messages); everyone
  rolls back.
* ``lwcp``  light checkpoints (value, active, comp); edges from CP_0 plus the
  edge log; messages regenerated from the loaded states.
* ``hwlog`` heavy checkpoints plus per-target message logs; survivors keep
  their state and only forward logged messages during recovery.
* ``lwlog`` light checkpoints plus vertex-state logs; survivors regenerate
  the messages they must forward.  Masked supersteps fall back to message
  logs.
"""

from __future__ import annotations

import enum
import re
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .engine import (
    CheckpointPolicy,
    GlobalControl,
    SuperstepResult,
    Worker,
    build_workers,
    final_aggregate,
    full_commit,
    run_superstep,
)
from .errors import InvariantViolation, ScenarioError, UnrecoverableError
from .graph import VertexState
from .locallog import LocalLog, control_from_json, control_to_json, regenerate_batches
from .program import VertexProgram
from .store import CheckpointKind, DurableStore


class Strategy(str, enum.Enum):
    HWCP = "hwcp"
    LWCP = "lwcp"
    HWLOG = "hwlog"
    LWLOG = "lwlog"

    @property
    def light(self) -> bool:
        return self in (Strategy.LWCP, Strategy.LWLOG)

    @property
    def logging(self) -> bool:
        return self in (Strategy.HWLOG, Strategy.LWLOG)

    @property
    def checkpoint_kind(self) -> CheckpointKind:
        return CheckpointKind.LIGHT if self.light else CheckpointKind.HEAVY


class Phase(str, enum.Enum):
    COMPUTE = "during-compute"
    COMMUNICATE = "during-communicate"
    CHECKPOINT_WRITE = "during-checkpoint-write"
    RECOVERY = "during-recovery-superstep"


@dataclass(frozen=True)
class FailureEvent:
    step: int
    phase: Phase
    ranks: tuple

    def format(self) -> str:
        ranks = ",".join(str(r) for r in self.ranks)
        return f"fail step={self.step} phase={self.phase.value} ranks={ranks}"


_EVENT_RE = re.compile(r"^fail\s+step=(\d+)\s+phase=([\w-]+)\s+ranks=([\d,\s]+)$")


class FailureScenario:
    """Scripted failure events; each fires at most once."""

    def __init__(self, events: Iterable[FailureEvent] = ()):
        self.events = list(events)
        self._fired: set[int] = set()

    @classmethod
    def parse(cls, text: str) -> "FailureScenario":
        events = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = _EVENT_RE.match(line)
            if not m:
                raise ScenarioError(f"scenario line {lineno}: cannot parse {raw!r}")
            try:
                phase = Phase(m.group(2))
            except ValueError:
                raise ScenarioError(f"scenario line {lineno}: unknown phase {m.group(2)!r}") from None
            ranks = tuple(int(r) for r in m.group(3).replace(" ", "").split(",") if r)
            if not ranks:
                raise ScenarioError(f"scenario line {lineno}: no ranks")
            events.append(FailureEvent(int(m.group(1)), phase, ranks))
        return cls(events)

    @classmethod
    def load(cls, path) -> "FailureScenario":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def format(self) -> str:
        return "".join(e.format() + "\n" for e in self.events)

    def inject(self, step: int, phase: Phase) -> tuple:
        ranks: list[int] = []
        for idx, e in enumerate(self.events):
            if idx in self._fired or e.step != step or e.phase != phase:
                continue
            self._fired.add(idx)
            ranks.extend(r for r in e.ranks if r not in ranks)
        return tuple(ranks)

    def reset(self) -> None:
        self._fired.clear()


def inject(scenario: Optional[FailureScenario], step: int, phase: Phase) -> tuple:
    """Ranks the scenario kills at (`step`, `phase`); empty if none."""
    if scenario is None:
        return ()
    return scenario.inject(step, phase)


@dataclass
class ClusterState:
    w_all: tuple
    s_table: dict
    master: int = 0
    epoch: int = 0


def revoke(live: Iterable[int], from_rank: int, handling: set) -> set:
    """Notify every live worker of an error detected by `from_rank`.

    Workers already in error handling ignore the notification, so repeated
    revokes are idempotent.  Returns the ranks that newly entered error
    handling.
    """
    newly = {r for r in live if r not in handling}
    handling |= newly
    handling.add(from_rank)
    return newly


def shrink(w_all: Iterable[int], alive: Iterable[int]) -> tuple:
    """Collective over the survivors: the identical surviving rank set for everyone."""
    alive = set(alive)
    return tuple(r for r in sorted(w_all) if r in alive)


def spawn_and_merge(w_alive: Sequence[int], n: int) -> tuple[tuple, tuple]:
    """Spawn replacements for the missing ranks; returns ``(w_all, new_ranks)``."""
    new = tuple(r for r in range(n) if r not in set(w_alive))
    return tuple(range(n)), new


def elect_master(s_table: dict) -> int:
    """Longest-living worker: largest state, smallest rank on ties."""
    if not s_table:
        raise UnrecoverableError("no surviving worker to elect as master")
    best = max(s_table.values())
    return min(r for r, s in s_table.items() if s == best)


class WorkerFailure(Exception):
    def __init__(self, step: int, phase: Phase, ranks: Sequence[int]):
        super().__init__(f"workers {list(ranks)} failed at superstep {step} ({phase.value})")
        self.step = step
        self.phase = phase
        self.ranks = tuple(ranks)


@dataclass
class RecoveryPlan:
    strategy: Strategy
    s_last: int
    respawned: tuple
    survivors: tuple


@dataclass
class RunStats:
    """Raw measurements; the harness turns them into the metrics report."""

    steps: list = field(default_factory=list)
    cp_writes: list = field(default_factory=list)
    cp_loads: list = field(default_factory=list)
    cpsteps: list = field(default_factory=list)
    log_writes: list = field(default_factory=list)
    log_loads: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    gc_deleted: int = 0


@dataclass
class JobResult:
    values: dict
    aggregate: object
    supersteps: int
    stats: RunStats
    program: VertexProgram

    def encoded_values(self) -> dict:
        codec = self.program.value_codec
        return {vid: codec.encode(v) for vid, v in self.values.items()}


class Job:
    """One run of a vertex program on a simulated cluster of `workers` ranks."""

    def __init__(self, records, program: VertexProgram, *, strategy="hwcp",
                 workers: int = 4, policy: Optional[CheckpointPolicy] = None,
                 scenario: Optional[FailureScenario] = None, root=None,
                 mode: str = "deterministic", trace: Optional[Callable] = None,
                 on_event: Optional[Callable] = None, superstep_limit: int = 100_000):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        if mode not in ("deterministic", "concurrent"):
            raise ValueError(f"unknown scheduler mode {mode!r}")
        self.program = program
        self.strategy = Strategy(strategy)
        self.n = workers
        self.policy = policy or CheckpointPolicy(10)
        self.scenario = scenario
        self.mode = mode
        self.trace = trace
        self.on_event = on_event
        self.superstep_limit = superstep_limit
        self._tmp = None
        if root is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="pregelft-")
            root = self._tmp.name
        self.root = Path(root)
        for sub in ("store", "log"):
            shutil.rmtree(self.root / sub, ignore_errors=True)
        self.store = DurableStore(self.root / "store")
        self.records = records
        self.num_vertices = len(records)
        self.workers: dict[int, Worker] = {}
        self.logs: dict[int, LocalLog] = {}
        self.stats = RunStats()
        self.state = ClusterState(tuple(range(workers)), {})
        self.aggregate = program.aggregator.identity if program.aggregator else None
        self.last_cp = 0
        self._last_cp_time = 0.0
        self.high_water = 0
        self.recover_until = 0  # s(W_mst) during log-based recovery
        self.recovery_target = 0
        self.failed_at: Optional[int] = None
        self._pool = None

    # -- helpers -------------------------------------------------------

    @property
    def master(self) -> int:
        return self.state.master

    def live(self) -> list[int]:
        return sorted(self.workers)

    def _emit(self, kind: str, **info) -> None:
        if self.on_event is not None:
            self.on_event(kind, self, **info)

    def _trace(self, kind: str, **info) -> None:
        if self.trace is not None:
            self.trace(kind, epoch=self.state.epoch, **info)

    def _new_log(self, rank: int) -> Optional[LocalLog]:
        if not self.strategy.logging:
            return None
        log = LocalLog(self.root / "log", rank, self.program)
        self.logs[rank] = log
        return log

    def _kill(self, ranks: Iterable[int]) -> list[int]:
        killed = [r for r in ranks if r in self.workers]
        for r in killed:
            del self.workers[r]
            log = self.logs.pop(r, None)
            if log is not None:
                log.wipe()
        if killed and not self.workers:
            raise ScenarioError("scenario killed every worker; at most n-1 failures are tolerated")
        return killed

    def _inject(self, step: int, phase: Phase) -> list[int]:
        return self._kill(inject(self.scenario, step, phase))

    def _step_kind(self, i: int) -> str:
        if self.failed_at is None or i > self.recovery_target:
            return "normal"
        return "last" if i == self.recovery_target else "recovery"

    def _map(self, fn, ranks):
        if self.mode == "concurrent" and len(ranks) > 1:
            if self._pool is None:
                self._pool = ThreadPoolExecutor(max_workers=self.n)
            return list(self._pool.map(fn, ranks))
        return [fn(r) for r in ranks]

    # -- loading -------------------------------------------------------

    def _load(self) -> None:
        for w in build_workers(self.records, self.program, self.n):
            self.workers[w.rank] = w
            self._new_log(w.rank)
        t0 = time.perf_counter()
        total = 0
        for r in self.live():
            total += self.store.write_checkpoint(self.workers[r], 0, CheckpointKind.INITIAL,
                                                 self.program)
        ctrl = GlobalControl(0, False, self.aggregate, False, False)
        self.store.commit_checkpoint(0, self.live(), control_to_json(ctrl, self.program))
        self._last_cp_time = time.perf_counter()
        self.stats.cp_writes.append({"step": 0, "kind": "initial", "bytes": total,
                                     "seconds": self._last_cp_time - t0})

    # -- one superstep -------------------------------------------------

    def _compute(self, ranks: Sequence[int], i: int) -> dict[int, SuperstepResult]:
        def one(r):
            w = self.workers[r]
            res = run_superstep(w, i, self.program, aggregator_input=self.aggregate,
                                num_vertices=self.num_vertices, trace=self.trace,
                                epoch=self.state.epoch)
            if self.strategy.logging:
                self._log_superstep(w, res)
            return res

        return dict(zip(ranks, self._map(one, list(ranks))))

    def _log_superstep(self, w: Worker, res: SuperstepResult) -> None:
        t0 = time.perf_counter()
        log = self.logs[w.rank]
        if self.strategy == Strategy.HWLOG or res.mask_flag:
            written = log.log_outgoing(res.superstep, w.out_queues)
            kind = "messages"
        else:
            written = log.log_states(res.superstep, w.vertices.values())
            kind = "states"
        log.log_partial(res)
        self.stats.log_writes.append({"step": res.superstep, "rank": w.rank, "kind": kind,
                                      "bytes": written,
                                      "seconds": time.perf_counter() - t0})

    def _communicate(self, i: int, outgoing: dict, targets: Optional[set] = None,
                     computed: Iterable[int] = ()) -> int:
        """Deliver ``{sender: {target_rank: batch}}``; returns messages delivered."""
        computed = set(computed)
        delivered = 0
        for sender in sorted(outgoing):
            for t, batch in sorted(outgoing[sender].items()):
                if targets is not None and t not in targets:
                    continue
                receiver = self.workers.get(t)
                if receiver is None:
                    continue  # dead peer: the send fails and is detected by the caller
                receiver.deliver(sender, batch)
                delivered += len(batch)
                self._trace("send", rank=sender, superstep=i, target=t, count=len(batch),
                            computed=sender in computed)
        return delivered

    def _assemble(self, ranks: Iterable[int]) -> None:
        for r in ranks:
            self.workers[r].assemble()

    def _commit(self, i: int, results: Sequence[SuperstepResult]) -> GlobalControl:
        ctrl = full_commit(results, i, self.program, self.policy,
                           last_checkpoint=self.last_cp,
                           elapsed=time.perf_counter() - self._last_cp_time,
                           defer_on_mask=self.strategy.light)
        self._record_control(ctrl)
        self._trace("commit", superstep=i)
        return ctrl

    def _record_control(self, ctrl: GlobalControl, skip: Iterable[int] = ()) -> None:
        if self.strategy.logging:
            skip = set(skip)
            for r, log in self.logs.items():
                if r not in skip:
                    log.record_control(ctrl)

    def _normal_superstep(self, i: int) -> GlobalControl:
        t0 = time.perf_counter()
        killed = self._inject(i, Phase.COMPUTE)
        phase = Phase.COMPUTE if killed else Phase.COMMUNICATE
        ranks = self.live()
        results = self._compute(ranks, i)
        self.high_water = max(self.high_water, i)
        killed += self._inject(i, Phase.COMMUNICATE)
        if self._step_kind(i) != "normal":
            # rerun after a rollback: this is a recovery superstep too
            more = self._inject(i, Phase.RECOVERY)
            if more and not killed:
                phase = Phase.RECOVERY
            killed += more
        outgoing = {r: dict(enumerate(self.workers[r].out_queues))
                    for r in ranks if r in self.workers}
        delivered = self._communicate(i, outgoing, computed=ranks)
        if killed:
            raise WorkerFailure(i, phase, killed)
        self._assemble(self.live())
        ctrl = self._commit(i, [results[r] for r in ranks])
        self._record_step(i, t0, delivered, results.values())
        if ctrl.checkpoint_now:
            self._checkpoint(i, ctrl)
        return ctrl

    def _record_step(self, i, t0, delivered, results) -> None:
        self.stats.steps.append({
            "step": i,
            "kind": self._step_kind(i),
            "epoch": self.state.epoch,
            "seconds": time.perf_counter() - t0,
            "messages": delivered,
            "emitted": sum(r.sent_message_count for r in results),
        })

    def _checkpoint(self, i: int, ctrl: GlobalControl) -> None:
        t0 = time.perf_counter()
        kind = self.strategy.checkpoint_kind
        victims = inject(self.scenario, i, Phase.CHECKPOINT_WRITE)
        cutoff = min(victims) if victims else None
        total = 0
        for r in self.live():
            if cutoff is not None and r >= cutoff:
                break
            total += self.store.write_checkpoint(self.workers[r], i, kind, self.program,
                                                 last_committed=self.last_cp)
        if victims:
            killed = self._kill(victims)
            if killed:
                raise WorkerFailure(i, Phase.CHECKPOINT_WRITE, killed)
            for r in self.live():  # victims were already dead; finish normally
                if r >= cutoff:
                    total += self.store.write_checkpoint(self.workers[r], i, kind, self.program,
                                                         last_committed=self.last_cp)
        self.store.commit_checkpoint(i, self.live(), control_to_json(ctrl, self.program))
        deleted = 0
        for log in self.logs.values():
            deleted += log.gc(self.strategy.value, i)
        for w in self.workers.values():
            w.edge_buffer = []
        self.stats.gc_deleted += deleted
        self.last_cp = i
        self._last_cp_time = time.perf_counter()
        self.stats.cp_writes.append({"step": i, "kind": kind.name.lower(), "bytes": total,
                                     "seconds": self._last_cp_time - t0, "gc_deleted": deleted})
        self._trace("checkpoint", superstep=i)
        self._emit("checkpoint-commit", step=i)

    # -- log-based recovery superstep ------------------------------------

    def _adjacency_at(self, w: Worker, i: int, s_last: int) -> dict:
        if not self.program.mutates_topology:
            return {vid: v.adj for vid, v in w.vertices.items()}
        return self.store.replay_edge_log(w.rank, self.program, i, committed=s_last,
                                          extra=w.edge_buffer)

    def _recovery_superstep(self, i: int) -> GlobalControl:
        t0 = time.perf_counter()
        ranks = self.live()
        s_tab = {r: self.workers[r].s for r in ranks}
        targets = {r for r in ranks if s_tab[r] <= i}
        forwarders = [r for r in ranks if s_tab[r] >= i]
        computers = [r for r in ranks if s_tab[r] == i - 1]
        lagging = [r for r in ranks if s_tab[r] < i - 1]
        if lagging:
            raise InvariantViolation(
                f"workers {lagging} are more than one superstep behind superstep {i}"
            )
        results = self._compute(computers, i)
        outgoing = {r: dict(enumerate(self.workers[r].out_queues)) for r in computers}
        sync = i >= self.recover_until
        for r in forwarders:
            w, log = self.workers[r], self.logs[r]
            tl = time.perf_counter()
            outgoing[r] = log.load_for_forward(
                i, targets, self.n, adjacency=self._adjacency_at(w, i, self.last_cp),
                num_vertices=self.num_vertices,
            )
            self.stats.log_loads.append({"step": i, "rank": r,
                                         "seconds": time.perf_counter() - tl})
            if sync:
                results[r] = log.logged_partial(i)
        killed = self._inject(i, Phase.RECOVERY)
        delivered = self._communicate(i, outgoing, targets, computed=computers)
        if killed:
            raise WorkerFailure(i, Phase.RECOVERY, killed)
        self._assemble(self.live())
        if not sync:
            ctrl = self.logs[self.master].fetch_control(i)
            self._record_control(ctrl, skip=[self.master])
            self._trace("commit", superstep=i, fetched=True)
        else:
            ctrl = self._commit(i, [results[r] for r in ranks])
        self._record_step(i, t0, delivered, [results[r] for r in computers])
        if ctrl.checkpoint_now:
            if not sync:
                raise InvariantViolation(f"logged control asks for CP[{i}] during recovery")
            self._checkpoint(i, ctrl)
        return ctrl

    # -- failure handling ----------------------------------------------

    def _handle_failure(self, failure: WorkerFailure) -> int:
        if self.failed_at is None:
            self.failed_at = failure.step
        self.recovery_target = max(self.recovery_target, self.high_water)
        while True:
            self.state.epoch += 1
            survivors = self.live()
            handling: set = set()
            revoke(survivors, survivors[0], handling)
            for w in self.workers.values():
                w.status = "error-handling"
            w_alive = shrink(self.state.w_all, survivors)
            s_table = {r: self.workers[r].s for r in w_alive}
            picks = {r: elect_master(dict(s_table)) for r in w_alive}
            if len(set(picks.values())) != 1:
                raise InvariantViolation(f"survivors disagree on the master: {picks}")
            self.state.master = picks[w_alive[0]]
            s_last = self.store.latest_committed()
            self.store.discard_uncommitted()
            w_all, new_ranks = spawn_and_merge(w_alive, self.n)
            for r in new_ranks:
                self.workers[r] = Worker(rank=r, n=self.n, status="recovering")
                self._new_log(r)
            if tuple(self.live()) != tuple(range(self.n)):
                raise InvariantViolation(f"rank set after merge is {self.live()}")
            self.state.w_all = w_all
            for w in self.workers.values():
                w.status = "recovering"
            plan = RecoveryPlan(self.strategy, s_last, new_ranks, w_alive)
            self.stats.failures.append({
                "step": failure.step, "phase": failure.phase.value,
                "ranks": list(failure.ranks), "epoch": self.state.epoch,
                "s_last": s_last, "master": self.state.master, "s_table": s_table,
                "election_agreed": True,
            })
            self._emit("failure", step=failure.step, plan=plan)
            try:
                self._prepare_recovery(plan)
            except WorkerFailure as again:
                failure = again
                continue
            break
        self.state.s_table = {r: w.s for r, w in self.workers.items()}
        self.state.master = elect_master(self.state.s_table)
        self.last_cp = plan.s_last
        ctrl = control_from_json(self.store.commit_control(plan.s_last), self.program)
        self.aggregate = ctrl.global_aggregate
        if self.program.aggregator is not None and self.aggregate is None:
            self.aggregate = self.program.aggregator.identity
        self.recover_until = self.state.s_table[self.state.master] if self.strategy.logging else 0
        for w in self.workers.values():
            w.status = "running"
        self._emit("recovered", plan=plan)
        return plan.s_last

    def _load_heavy(self, w: Worker, i: int) -> None:
        t0 = time.perf_counter()
        data = self.store.load_checkpoint(w.rank, i, self.program)
        w.vertices = {rec.id: VertexState(rec.id, rec.value, rec.adj, rec.active, False)
                      for rec in data.records}
        w.clear_queues()
        w.incoming = {rec.id: rec.messages for rec in data.records if rec.messages}
        w.edge_buffer = []
        w.s = i
        self.stats.cp_loads.append({"step": i, "rank": w.rank,
                                    "seconds": time.perf_counter() - t0})

    def _load_light(self, w: Worker, i: int, reload_adj: bool) -> None:
        t0 = time.perf_counter()
        data = self.store.load_checkpoint(w.rank, i, self.program)
        if data.kind == CheckpointKind.INITIAL:
            adj = {rec.id: rec.adj for rec in data.records}
        elif reload_adj:
            adj = self.store.replay_edge_log(w.rank, self.program, i)
        else:
            adj = {vid: v.adj for vid, v in w.vertices.items()}
        w.vertices = {rec.id: VertexState(rec.id, rec.value, adj[rec.id], rec.active, rec.comp)
                      for rec in data.records}
        w.clear_queues()
        w.edge_buffer = []
        w.s = i
        self.stats.cp_loads.append({"step": i, "rank": w.rank,
                                    "seconds": time.perf_counter() - t0})

    def _regenerate_from_memory(self, w: Worker, i: int, targets) -> dict:
        states = [(vid, v.comp, v.value) for vid, v in w.vertices.items()]
        adjacency = {vid: v.adj for vid, v in w.vertices.items()}
        return regenerate_batches(self.program, i, states, adjacency, self.n, targets,
                                  num_vertices=self.num_vertices)

    def survivor_recovery(self, w: Worker, plan: RecoveryPlan) -> None:
        s_last = plan.s_last
        if self.strategy == Strategy.HWCP:
            self._load_heavy(w, s_last)
        elif self.strategy == Strategy.LWCP:
            self._load_light(w, s_last, reload_adj=self.program.mutates_topology)
        elif w.s == s_last:
            # respawned earlier in a cascade and not yet past s_last
            self.new_worker_recovery(w, plan)
        else:
            # keep state; drop on-the-fly messages
            w.clear_queues()

    def new_worker_recovery(self, w: Worker, plan: RecoveryPlan) -> None:
        s_last = plan.s_last
        if not self.strategy.light:
            self._load_heavy(w, s_last)
            return
        self._load_light(w, s_last, reload_adj=True)
        if self.strategy == Strategy.LWLOG and s_last > 0:
            # stands in for the retained superstep-s_last state log
            self.logs[w.rank].log_states(s_last, w.vertices.values())

    def _prepare_recovery(self, plan: RecoveryPlan) -> None:
        t0 = time.perf_counter()
        s_last = plan.s_last
        for r in plan.survivors:
            self.survivor_recovery(self.workers[r], plan)
        for r in plan.respawned:
            self.new_worker_recovery(self.workers[r], plan)
        ranks = self.live()
        outgoing: dict = {}
        targets = None
        if self.strategy == Strategy.LWCP:
            outgoing = {r: self._regenerate_from_memory(self.workers[r], s_last, range(self.n))
                        for r in ranks}
        elif self.strategy == Strategy.LWLOG:
            targets = {r for r in ranks if self.workers[r].s <= s_last}
            respawned = set(plan.respawned)
            for r in ranks:
                w = self.workers[r]
                if r in respawned or w.s == s_last:
                    outgoing[r] = self._regenerate_from_memory(w, s_last, targets)
                elif s_last == 0:
                    # initial states carry no comp flags: nothing was sent in superstep 0
                    outgoing[r] = {}
                else:
                    tl = time.perf_counter()
                    outgoing[r] = self.logs[r].load_for_forward(
                        s_last, targets, self.n,
                        adjacency=self._adjacency_at(w, s_last, s_last),
                        num_vertices=self.num_vertices,
                    )
                    self.stats.log_loads.append({"step": s_last, "rank": r,
                                                 "seconds": time.perf_counter() - tl})
        killed = self._inject(s_last, Phase.RECOVERY)
        delivered = self._communicate(s_last, outgoing, targets)
        if killed:
            raise WorkerFailure(s_last, Phase.RECOVERY, killed)
        if outgoing:
            self._assemble(self.live())
        self.stats.cpsteps.append({"step": s_last, "epoch": self.state.epoch,
                                   "seconds": time.perf_counter() - t0,
                                   "messages": delivered})

    # -- driver ----------------------------------------------------------

    def run(self) -> JobResult:
        try:
            self._load()
            i = 1
            while True:
                if i > self.superstep_limit:
                    raise UnrecoverableError(f"superstep limit {self.superstep_limit} exceeded")
                try:
                    if self.strategy.logging and i <= self.recover_until:
                        ctrl = self._recovery_superstep(i)
                    else:
                        ctrl = self._normal_superstep(i)
                except WorkerFailure as failure:
                    i = self._handle_failure(failure) + 1
                    continue
                self.aggregate = ctrl.global_aggregate
                if ctrl.halt:
                    break
                i += 1
            values = {}
            for r in self.live():
                for vid, v in self.workers[r].vertices.items():
                    values[vid] = v.value
            values = dict(sorted(values.items()))
            agg = final_aggregate(self.program, values.values())
            return JobResult(values, agg, i, self.stats, self.program)
        finally:
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None

    def close(self) -> None:
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None


def run_job(records, program: VertexProgram, **kwargs) -> JobResult:
    """Run a job in a throwaway directory and return its result."""
    job = Job(records, program, **kwargs)
    try:
        return job.run()
    finally:
        job.close()
