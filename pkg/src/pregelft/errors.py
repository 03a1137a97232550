"""Exception types raised across the engine, store and simulator."""

from __future__ import annotations


class PregelError(Exception):
    """Base class for every error raised by this package."""


class GraphError(PregelError, ValueError):
    """The input graph is structurally invalid."""


class GraphParseError(GraphError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ReplayCorruptionError(PregelError):
    """A logged mutation no longer matches the adjacency list it is replayed on."""


class ContractViolation(PregelError):
    """A caller broke the documented pre-conditions of an operation."""


class ProgramError(PregelError):
    """A user vertex program raised; aborts the job (not a simulated machine failure)."""

    def __init__(self, vertex: int, superstep: int, cause: BaseException):
        super().__init__(
            f"compute() failed on vertex {vertex} in superstep {superstep}: {cause!r}"
        )
        self.vertex = vertex
        self.superstep = superstep
        self.__cause__ = cause


class StoreError(PregelError):
    """The durable store is missing data it is assumed to hold."""


class LogError(PregelError):
    """A local log file expected by recovery is missing or unreadable."""


class InvariantViolation(PregelError):
    """A framework invariant that the protocol proves impossible was observed."""


class ScenarioError(PregelError):
    """The failure scenario cannot be executed (e.g. it kills every worker)."""


class UnrecoverableError(PregelError):
    """Recovery cannot proceed (no survivors to elect, no checkpoint to load)."""


class ConfigError(PregelError, ValueError):
    """Invalid run configuration (a usage error at the command line)."""
