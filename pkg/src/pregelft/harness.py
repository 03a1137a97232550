"""Job runner: configuration, seeded graph generation, metrics and oracle checks."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .algorithms import PROGRAMS
from .cluster import FailureScenario, JobResult, Strategy, run_job
from .engine import CheckpointPolicy
from .errors import ConfigError
from .graph import read_graph
from .program import VertexProgram

METRIC_NAMES = ("T_norm", "T_cpstep", "T_recov", "T_last", "T_cp0", "T_cp",
                "T_cpload", "T_log", "T_logload")
LOG_METRICS = ("T_log", "T_logload")


# -- graph generation ------------------------------------------------------

@dataclass(frozen=True)
class GenSpec:
    v: int
    e: int
    seed: int = 0
    undirected: bool = False
    window: Optional[int] = None  # neighbors drawn within +-window ids: long diameter

    @classmethod
    def parse(cls, text: str) -> "GenSpec":
        fields = {}
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            key, sep, val = part.partition("=")
            if not sep:
                raise ConfigError(f"generator spec {text!r}: expected key=value, got {part!r}")
            fields[key.strip()] = val.strip()
        try:
            spec = cls(
                v=int(fields.pop("v")),
                e=int(fields.pop("e")),
                seed=int(fields.pop("seed", 0)),
                undirected=fields.pop("undirected", "0").lower() in ("1", "true", "yes"),
                window=int(fields["window"]) if "window" in fields else None,
            )
        except KeyError as exc:
            raise ConfigError(f"generator spec {text!r} is missing {exc.args[0]}") from None
        except ValueError as exc:
            raise ConfigError(f"generator spec {text!r}: {exc}") from None
        fields.pop("window", None)
        if fields:
            raise ConfigError(f"generator spec {text!r}: unknown keys {sorted(fields)}")
        return spec

    def format(self) -> str:
        out = f"v={self.v},e={self.e},seed={self.seed}"
        if self.undirected:
            out += ",undirected=1"
        if self.window is not None:
            out += f",window={self.window}"
        return out


def generate_graph(v: int, e: int, seed: int = 0, *, undirected: bool = False,
                   window: Optional[int] = None) -> list[tuple[int, list]]:
    """Seeded random graph with uniform endpoints and no self loops or duplicates.

    `e` counts directed edges, or unordered pairs when `undirected` (each pair
    then appears in both adjacency lists).  Adjacency lists are ascending.
    """
    if v < 1:
        raise ConfigError("generated graph needs v >= 1")
    if e < 0:
        raise ConfigError("generated graph needs e >= 0")
    cap = v * (v - 1) // (2 if undirected else 1)
    if window is not None:
        if window < 1:
            raise ConfigError("window must be >= 1")
        pairs = sum(min(window, v - 1 - a) for a in range(v))
        cap = min(cap, pairs if undirected else 2 * pairs)
    if e > cap:
        raise ConfigError(f"cannot place {e} distinct edges on {v} vertices")
    rng = np.random.default_rng(seed)
    seen: set = set()
    edges: list[tuple[int, int]] = []
    while len(edges) < e:
        batch = max(64, 2 * (e - len(edges)))
        src = rng.integers(0, v, size=batch)
        if window is None:
            dst = rng.integers(0, v, size=batch)
        else:
            dst = src + rng.integers(-window, window + 1, size=batch)
        for a, b in zip(src.tolist(), dst.tolist()):
            if a == b or not 0 <= b < v:
                continue
            key = (min(a, b), max(a, b)) if undirected else (a, b)
            if key in seen:
                continue
            seen.add(key)
            edges.append(key)
            if len(edges) == e:
                break
    adj: list[list[int]] = [[] for _ in range(v)]
    for a, b in edges:
        adj[a].append(b)
        if undirected:
            adj[b].append(a)
    return [(vid, sorted(nbrs)) for vid, nbrs in enumerate(adj)]


# -- configuration ---------------------------------------------------------

def make_program(algorithm: str, params: Optional[dict] = None) -> VertexProgram:
    params = dict(params or {})
    factory = PROGRAMS.get(algorithm)
    if factory is None:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {sorted(PROGRAMS)}")
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {algorithm}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class RunConfig:
    strategy: str = "hwcp"
    algorithm: str = "pagerank"
    params: dict = field(default_factory=dict)
    graph: Optional[str] = None
    gen: Optional[GenSpec] = None
    workers: int = 4
    cp_every: Optional[int] = 10
    cp_every_secs: Optional[float] = None
    scenario: Optional[str] = None  # path or inline text
    mode: str = "deterministic"
    out: Optional[str] = None
    workdir: Optional[str] = None

    def validate(self) -> None:
        try:
            Strategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r}") from None
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if (self.graph is None) == (self.gen is None):
            raise ConfigError("give exactly one of a graph path or a generator spec")
        if (self.cp_every is None) == (self.cp_every_secs is None):
            raise ConfigError("give exactly one of cp_every / cp_every_secs")
        if self.cp_every is not None and self.cp_every < 1:
            raise ConfigError("checkpoint interval must be >= 1")
        if self.cp_every_secs is not None and self.cp_every_secs <= 0:
            raise ConfigError("checkpoint interval must be > 0")
        if self.mode not in ("deterministic", "concurrent"):
            raise ConfigError(f"unknown scheduler mode {self.mode!r}")

    def policy(self) -> CheckpointPolicy:
        if self.cp_every_secs is not None:
            return CheckpointPolicy(None, self.cp_every_secs)
        return CheckpointPolicy(self.cp_every)

    def load_graph(self) -> list[tuple[int, list]]:
        if self.graph is not None:
            return read_graph(self.graph)
        g = self.gen
        return generate_graph(g.v, g.e, g.seed, undirected=g.undirected, window=g.window)

    def load_scenario(self) -> FailureScenario:
        if self.scenario is None:
            return FailureScenario()
        text = self.scenario
        path = Path(text)
        if "\n" not in text and path.exists():
            text = path.read_text(encoding="utf-8")
        return FailureScenario.parse(text)

    def oracle(self) -> "RunConfig":
        """Same configuration without failures."""
        return RunConfig(**{**self.__dict__, "scenario": None, "out": None,
                            "workdir": None})


# -- metrics ---------------------------------------------------------------

def _mean(xs) -> Optional[float]:
    xs = list(xs)
    return statistics.fmean(xs) if xs else None


@dataclass
class MetricsReport:
    strategy: str
    algorithm: str
    times: dict
    counters: dict

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "algorithm": self.algorithm,
                "times": dict(self.times), "counters": self.counters}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(d["strategy"], d["algorithm"], dict(d["times"]), d["counters"])

    def without_durations(self) -> dict:
        """Everything except wall-clock fields: stable across identical runs."""
        return {"strategy": self.strategy, "algorithm": self.algorithm,
                "present": {k: v is not None for k, v in self.times.items()},
                "counters": self.counters}


def build_report(result: JobResult, strategy: str, algorithm: str) -> MetricsReport:
    st = result.stats
    strategy = Strategy(strategy)
    failed_at = st.failures[0]["step"] if st.failures else None
    normal = [s for s in st.steps
              if s["kind"] == "normal" and s["epoch"] == 0
              and (failed_at is None or s["step"] < failed_at)]
    recov = [s for s in st.steps if s["kind"] == "recovery"]
    last = [s for s in st.steps if s["kind"] == "last"]
    cp0 = [c for c in st.cp_writes if c["step"] == 0]
    cps = [c for c in st.cp_writes if c["step"] > 0]
    times = {
        "T_norm": _mean(s["seconds"] for s in normal),
        "T_cpstep": st.cpsteps[0]["seconds"] if st.cpsteps else None,
        "T_recov": _mean(s["seconds"] for s in recov),
        "T_last": _mean(s["seconds"] for s in last),
        "T_cp0": cp0[0]["seconds"] if cp0 else None,
        "T_cp": _mean(c["seconds"] for c in cps),
        "T_cpload": _mean(c["seconds"] for c in st.cp_loads if c["step"] > 0),
        "T_log": _mean(w["seconds"] for w in st.log_writes) if strategy.logging else None,
        "T_logload": _mean(w["seconds"] for w in st.log_loads) if strategy.logging else None,
    }
    cp_bytes = {"initial": 0, "heavy": 0, "light": 0}
    for c in st.cp_writes:
        cp_bytes[c["kind"]] += c["bytes"]
    counters = {
        "supersteps": result.supersteps,
        "failures": len(st.failures),
        "respawned": sum(len(f["ranks"]) for f in st.failures),
        "cp_bytes": cp_bytes,
        "checkpoints": [[c["step"], c["kind"], c["bytes"]] for c in st.cp_writes],
        "log_bytes": sum(w["bytes"] for w in st.log_writes) if strategy.logging else None,
        "gc_deletions": st.gc_deleted if strategy.logging else None,
        "messages_per_superstep": [[s["step"], s["messages"]] for s in st.steps
                                   if s["kind"] == "normal"],
        "messages_per_recovery_superstep": [[s["step"], s["messages"]] for s in st.steps
                                            if s["kind"] != "normal"],
        "cpstep_messages": [[c["step"], c["messages"]] for c in st.cpsteps],
    }
    return MetricsReport(strategy.value, algorithm, times, counters)


def emit(reports, fmt: str = "machine") -> str:
    """Render one report or a list of them as JSON or as a strategy-by-metric table."""
    single = isinstance(reports, MetricsReport)
    items = [reports] if single else list(reports)
    if fmt == "machine":
        payload = items[0].to_dict() if single else [r.to_dict() for r in items]
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if fmt != "human":
        raise ValueError(f"unknown format {fmt!r}")
    header = ["strategy"] + list(METRIC_NAMES)
    rows = [header]
    for r in items:
        cells = [r.strategy.upper()]
        for name in METRIC_NAMES:
            v = r.times.get(name)
            cells.append("-" if v is None else f"{v:.4f}")
        rows.append(cells)
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def parse_report(text: str):
    """Inverse of ``emit(..., 'machine')``."""
    data = json.loads(text)
    if isinstance(data, list):
        return [MetricsReport.from_dict(d) for d in data]
    return MetricsReport.from_dict(data)


# -- running and verifying -------------------------------------------------

@dataclass
class RunOutcome:
    report: MetricsReport
    values: dict
    result: JobResult


def run(config: RunConfig, *, records=None, trace=None, on_event=None) -> RunOutcome:
    """Run one job to completion; `records` overrides the configured graph."""
    config.validate()
    program = make_program(config.algorithm, config.params)
    if records is None:
        records = config.load_graph()
    result = run_job(records, program, strategy=config.strategy, workers=config.workers,
                     policy=config.policy(), scenario=config.load_scenario(),
                     root=config.workdir, mode=config.mode, trace=trace, on_event=on_event)
    report = build_report(result, config.strategy, config.algorithm)
    if config.out:
        dump_values(config.out, result.values)
    return RunOutcome(report, result.values, result)


def dump_values(path, values: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vid, value in values.items():
            fh.write(f"{vid}\t{value!r}\n")


@dataclass
class Equivalence:
    ok: bool
    structural: bool = False
    vertex: Optional[int] = None
    got: object = None
    expected: object = None

    def describe(self) -> str:
        if self.ok:
            return "equivalent"
        if self.structural:
            return "vertex sets differ"
        return f"first divergence at vertex {self.vertex}: {self.got!r} != {self.expected!r}"


def verify_equivalence(values: dict, oracle: dict, codec) -> Equivalence:
    """Byte-compare encoded final values vertex by vertex in ascending id order."""
    if set(values) != set(oracle):
        return Equivalence(False, structural=True)
    for vid in sorted(oracle):
        if codec.encode(values[vid]) != codec.encode(oracle[vid]):
            return Equivalence(False, vertex=vid, got=values[vid], expected=oracle[vid])
    return Equivalence(True)


def run_with_oracle(config: RunConfig, records: Optional[Sequence] = None):
    """Run `config` and its failure-free twin; returns ``(outcome, oracle, equivalence)``."""
    if records is None:
        config.validate()
        records = config.load_graph()
    outcome = run(config, records=records)
    oracle = run(config.oracle(), records=records)
    codec = outcome.result.program.value_codec
    return outcome, oracle, verify_equivalence(outcome.values, oracle.values, codec)
