"""Instrumented execution of target programs.

Built-in targets carry hand-placed block probes. A probe records the
control-flow edge from the previously executed block, adds the block's
source-line weight to the running cost, and bumps the block's hit counter.
The set of distinct edges seen during one execution identifies the
execution's path; loop repetitions collapse because sets ignore
multiplicity.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from .inputs import ByteDomain, InputDomain, InputDomainError, TargetInput, input_size

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"
STATUS_CRASH = "crash"

COST_LINES = "lines"
COST_TIME = "time"

#: Paper-scale default; tests and the CLI dial this down to seconds.
DEFAULT_TIMEOUT_SECS = 900.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class TraceTimeout(Exception):
    """Internal signal: cooperative per-execution deadline exceeded."""


class UnknownTargetError(ValueError):
    pass


def path_id(edges: Iterable[int]) -> int:
    """64-bit FNV-1a over the sorted, deduplicated edge ids.

    Depends only on set membership, so any insertion order (and repeated
    edges) map to the same id, stable across processes.
    """
    h = _FNV_OFFSET
    for e in sorted(set(edges)):
        for _ in range(8):
            h = ((h ^ (e & 0xFF)) * _FNV_PRIME) & _MASK64
            e >>= 8
    return h


EMPTY_PATH_ID = path_id(())


class Tracer:
    """Collects edges, per-block hit counts, and executed-line cost.

    ``hit`` is on the hot path of every target; keep it minimal. The
    deadline is checked every few thousand probes so that instrumented
    infinite loops surface as timeouts without per-hit clock reads.
    """

    __slots__ = ("cost", "edges", "counts", "_prev", "_deadline", "_tick")

    CHECK_EVERY = 4096

    def __init__(self, deadline: float) -> None:
        self.cost = 0
        self.edges: set[int] = set()
        self.counts: dict[int, int] = {}
        self._prev = 0
        self._deadline = deadline
        self._tick = self.CHECK_EVERY

    def hit(self, block: int, lines: int) -> None:
        self.cost += lines
        self.edges.add((self._prev << 20) | block)
        self._prev = block
        c = self.counts
        c[block] = c.get(block, 0) + 1
        self._tick -= 1
        if self._tick <= 0:
            self._tick = self.CHECK_EVERY
            if time.monotonic() > self._deadline:
                raise TraceTimeout


@dataclass(frozen=True)
class TargetSpec:
    """Execution contract for one target program."""

    name: str
    domain: InputDomain
    cost_mode: str = COST_LINES
    timeout_secs: float = DEFAULT_TIMEOUT_SECS
    time_repeats: int = 3
    size_field: str = "size"

    def __post_init__(self) -> None:
        if self.timeout_secs <= 0:
            raise ValueError("timeout must be positive")
        if self.cost_mode not in (COST_LINES, COST_TIME):
            raise ValueError(f"unknown cost mode {self.cost_mode!r}")
        if self.time_repeats < 1:
            raise ValueError("time_repeats must be >= 1")

    def size_of(self, x: TargetInput) -> int:
        return input_size(x, self.size_field)


@dataclass(frozen=True)
class ExecutionRecord:
    """Immutable outcome of one instrumented execution."""

    input: TargetInput
    size: int
    edge_set: frozenset[int]
    path: int
    cost: float
    internal_counts: Mapping[str, int]
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


class BlockTable:
    """Static block-id assignment for one target's probe sites."""

    def __init__(self, prefix: str, base: int) -> None:
        self.prefix = prefix
        self.base = base
        self.sites: dict[int, tuple[str, int]] = {}
        self._next = 1

    def block(self, site: str, lines: int) -> int:
        bid = self.base + self._next
        self._next += 1
        self.sites[bid] = (f"{self.prefix}.{site}", lines)
        return bid


@dataclass(frozen=True)
class BuiltinTarget:
    """A natively instrumented benchmark program."""

    name: str
    domain: InputDomain
    blocks: BlockTable
    decode: Callable[[TargetInput], Any]
    trace: Callable[[Tracer, Any], Any]
    seeds: tuple[TargetInput, ...]
    summary: str = ""

    def default_spec(self, cost_mode: str = COST_LINES,
                     timeout_secs: float = DEFAULT_TIMEOUT_SECS) -> TargetSpec:
        return TargetSpec(name=self.name, domain=self.domain,
                          cost_mode=cost_mode, timeout_secs=timeout_secs)


def _site_names(blocks: BlockTable, counts: dict[int, int]) -> dict[str, int]:
    return {blocks.sites[bid][0]: n for bid, n in counts.items()}


def _run_builtin(target: BuiltinTarget, spec: TargetSpec, x: TargetInput) -> ExecutionRecord:
    size = spec.size_of(x)
    repeats = spec.time_repeats if spec.cost_mode == COST_TIME else 1
    status = STATUS_OK
    tracer = None
    micros: list[float] = []
    for _ in range(repeats):
        tracer = Tracer(deadline=time.monotonic() + spec.timeout_secs)
        payload = target.decode(x)
        t0 = time.perf_counter_ns()
        try:
            target.trace(tracer, payload)
        except TraceTimeout:
            status = STATUS_TIMEOUT
            break
        except Exception:
            status = STATUS_CRASH
            break
        micros.append((time.perf_counter_ns() - t0) / 1000.0)
    assert tracer is not None
    if spec.cost_mode == COST_TIME and status == STATUS_OK:
        cost: float = statistics.median(micros)
    else:
        cost = tracer.cost
    edges = frozenset(tracer.edges)
    return ExecutionRecord(
        input=x,
        size=size,
        edge_set=edges,
        path=path_id(edges),
        cost=cost,
        internal_counts=_site_names(target.blocks, tracer.counts),
        status=status,
    )


def run_instrumented(spec: TargetSpec, x: TargetInput, target: Any = None) -> ExecutionRecord:
    """Execute one input under instrumentation and summarize the trace.

    Inputs outside the spec's domain are rejected before execution.
    Crashes inside the target produce a ``crash`` record carrying the
    partial trace; exceeding the timeout produces a ``timeout`` record.
    """
    if not spec.domain.contains(x):
        raise InputDomainError(f"input outside the domain of target {spec.name!r}")
    if target is None:
        from .targets import get_target

        target = get_target(spec.name)
    if isinstance(target, BuiltinTarget):
        return _run_builtin(target, spec, x)
    # External programs self-report traces over the wire format.
    from .tracefmt import ExternalTarget, run_external

    if isinstance(target, ExternalTarget):
        return run_external(target, spec, x)
    raise TypeError(f"unsupported target type {type(target)!r}")
