"""DPFUZZ1 trace wire format and the external-program adapter.

External programs self-report one execution per trace file. Grammar, one
directive per line, sections in this order:

    DPFUZZ1
    EDGE <u64>               (zero or more)
    COUNT <name> <u64>       (zero or more)
    COST <u64>               (exactly one, final line)

Names match ``[A-Za-z0-9_.:]+``. The adapter launches the program with the
input bytes on stdin and the trace-file path in the environment variable
``DPFUZZ_TRACE_FILE``.
"""

from __future__ import annotations

import os
import re
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Mapping

from .harness import (
    ExecutionRecord,
    STATUS_CRASH,
    STATUS_OK,
    STATUS_TIMEOUT,
    TargetSpec,
    path_id,
)
from .inputs import ByteDomain, TargetInput

TRACE_ENV_VAR = "DPFUZZ_TRACE_FILE"

_U64_MAX = (1 << 64) - 1
_EDGE_RE = re.compile(r"^EDGE (\d+)$")
_COUNT_RE = re.compile(r"^COUNT ([A-Za-z0-9_.:]+) (\d+)$")
_COST_RE = re.compile(r"^COST (\d+)$")


class TraceFormatError(ValueError):
    """Malformed trace stream; carries the 1-based offending line number."""

    def __init__(self, line_no: int, message: str) -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class TraceFragment:
    """Edge set, internal counts, and cost decoded from one trace stream."""

    edge_set: frozenset[int]
    internal_counts: Mapping[str, int]
    cost: int


def parse_external_trace(stream: bytes | str) -> TraceFragment:
    """Parse a DPFUZZ1 stream, rejecting any deviation from the grammar."""
    if isinstance(stream, bytes):
        try:
            text = stream.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(1, f"not valid UTF-8: {exc}") from None
    else:
        text = stream
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    if not lines or lines[0] != "DPFUZZ1":
        raise TraceFormatError(1, "missing DPFUZZ1 header")

    edges: set[int] = set()
    counts: dict[str, int] = {}
    cost: int | None = None
    section = 1  # 1=edges, 2=counts, 3=after cost
    for no, line in enumerate(lines[1:], start=2):
        if cost is not None:
            raise TraceFormatError(no, "content after COST footer")
        m = _EDGE_RE.match(line)
        if m:
            if section > 1:
                raise TraceFormatError(no, "EDGE after COUNT section")
            edges.add(_u64(no, m.group(1)))
            continue
        m = _COUNT_RE.match(line)
        if m:
            section = 2
            name = m.group(1)
            if name in counts:
                raise TraceFormatError(no, f"duplicate COUNT name {name!r}")
            counts[name] = _u64(no, m.group(2))
            continue
        m = _COST_RE.match(line)
        if m:
            cost = _u64(no, m.group(1))
            continue
        raise TraceFormatError(no, f"unrecognized directive {line!r}")
    if cost is None:
        raise TraceFormatError(len(lines) + 1, "missing COST footer")
    return TraceFragment(edge_set=frozenset(edges), internal_counts=counts, cost=cost)


def _u64(line_no: int, digits: str) -> int:
    value = int(digits)
    if value > _U64_MAX:
        raise TraceFormatError(line_no, f"value {digits} exceeds u64 range")
    return value


def format_trace(fragment: TraceFragment) -> str:
    """Render a fragment back into wire format (round-trip helper)."""
    out = ["DPFUZZ1"]
    out.extend(f"EDGE {e}" for e in sorted(fragment.edge_set))
    out.extend(f"COUNT {k} {v}" for k, v in sorted(fragment.internal_counts.items()))
    out.append(f"COST {fragment.cost}")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ExternalTarget:
    """A foreign program that reports traces over the wire format."""

    argv: tuple[str, ...]
    domain: ByteDomain = ByteDomain(0, 4096)

    @property
    def name(self) -> str:
        return "external:" + os.path.basename(self.argv[0])


def run_external(target: ExternalTarget, spec: TargetSpec, x: TargetInput) -> ExecutionRecord:
    """Execute an external program once and decode its self-reported trace.

    Nonzero exit and unparseable output both yield a crash record; an
    expired timeout yields a timeout record. Partial traces are kept when
    the file still parses.
    """
    size = spec.size_of(x)
    status = STATUS_OK
    with tempfile.TemporaryDirectory(prefix="dpfuzz-trace-") as tmp:
        trace_path = os.path.join(tmp, "trace.txt")
        env = dict(os.environ)
        env[TRACE_ENV_VAR] = trace_path
        try:
            proc = subprocess.run(
                list(target.argv),
                input=x.data or b"",
                env=env,
                timeout=spec.timeout_secs,
                capture_output=True,
            )
            if proc.returncode != 0:
                status = STATUS_CRASH
        except subprocess.TimeoutExpired:
            status = STATUS_TIMEOUT
        fragment = None
        if os.path.exists(trace_path):
            try:
                with open(trace_path, "rb") as fh:
                    fragment = parse_external_trace(fh.read())
            except TraceFormatError:
                if status == STATUS_OK:
                    status = STATUS_CRASH
        elif status == STATUS_OK:
            status = STATUS_CRASH
    edges = fragment.edge_set if fragment else frozenset()
    counts = dict(fragment.internal_counts) if fragment else {}
    cost = float(fragment.cost) if fragment else 0.0
    return ExecutionRecord(
        input=x,
        size=size,
        edge_set=edges,
        path=path_id(edges),
        cost=cost,
        internal_counts=counts,
        status=status,
    )
