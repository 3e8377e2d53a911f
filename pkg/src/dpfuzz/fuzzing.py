"""Multi-population evolutionary search for differential performance.

The engine keeps one population per discovered path. Each loop iteration
picks a cluster, a path inside it, and an input inside the path (all
weighted by retained cost), mutates it (optionally crossing over with a
partner), executes it, and admits the result when it opens a new path or
strictly raises the retained cost for its (path, size) cell. Path
functions are re-fitted and re-clustered every ``cluster_interval``
steps; the loop stops at the iteration bound, the wall budget, or once
``target_clusters`` well-separated clusters exist.

Two reference population policies are available for comparison runs:
``slowfuzz`` (single global population, admit only on a new global cost
record, uniform selection) and ``perffuzz`` (admit on a new edge or a new
per-edge cost record, select among per-edge best inputs).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .harness import (
    ExecutionRecord,
    STATUS_OK,
    TargetSpec,
    run_instrumented,
)
from .inputs import ByteDomain, InputDomain, RecordDomain, TargetInput
from .perfmodel import (
    ClusterSet,
    Grid,
    PerfFunction,
    UnmodeledPathError,
    cluster,
    fit_perf_function,
    pairwise_distances,
    separated_count,
)
from .rng import SplitMix64

log = logging.getLogger(__name__)

POLICY_DPFUZZ = "dpfuzz"
POLICY_SLOWFUZZ = "slowfuzz"
POLICY_PERFFUZZ = "perffuzz"
POLICIES = (POLICY_DPFUZZ, POLICY_SLOWFUZZ, POLICY_PERFFUZZ)

#: Selection weight for zero-cost entries, so they stay reachable.
FALLBACK_WEIGHT = 1.0


class FuzzConfigError(ValueError):
    pass


class FuzzStateError(RuntimeError):
    pass


class CrossoverKindError(ValueError):
    pass


# ---------------------------------------------------------------------------
# coverage and population bookkeeping


class CoverageMap:
    """Per-path (size, cost) samples, keeping the max cost per size."""

    def __init__(self) -> None:
        self._samples: dict[int, list[tuple[int, float]]] = {}
        self._index: dict[int, dict[int, int]] = {}

    def __contains__(self, path: int) -> bool:
        return path in self._samples

    def __len__(self) -> int:
        return len(self._samples)

    def paths(self) -> Iterable[int]:
        return self._samples.keys()

    def samples(self, path: int) -> list[tuple[int, float]]:
        return self._samples[path]

    def items(self):
        return self._samples.items()

    def retained(self, path: int, size: int) -> float | None:
        idx = self._index.get(path, {}).get(size)
        if idx is None:
            return None
        return self._samples[path][idx][1]

    def best_cost(self, path: int) -> float:
        return max(c for _, c in self._samples[path])

    def global_max(self) -> float:
        return max((c for ss in self._samples.values() for _, c in ss), default=0.0)

    def max_size(self) -> int:
        return max((n for ss in self._samples.values() for n, _ in ss), default=0)


class PopulationMap:
    """Inputs parallel to the coverage samples, index for index."""

    def __init__(self) -> None:
        self._inputs: dict[int, list[TargetInput]] = {}

    def __contains__(self, path: int) -> bool:
        return path in self._inputs

    def __len__(self) -> int:
        return len(self._inputs)

    def paths(self) -> Iterable[int]:
        return self._inputs.keys()

    def inputs(self, path: int) -> list[TargetInput]:
        return self._inputs[path]

    def items(self):
        return self._inputs.items()

    def total_inputs(self) -> int:
        return sum(len(v) for v in self._inputs.values())


def admit(cov: CoverageMap, record: ExecutionRecord) -> bool:
    """Admission rule: new path, new size, or a strictly higher cost."""
    if record.status != STATUS_OK:
        log.debug("record with status %s never admitted", record.status)
        return False
    retained = cov.retained(record.path, record.size)
    return retained is None or record.cost > retained


def _insert(cov: CoverageMap, pop: PopulationMap, record: ExecutionRecord,
            x: TargetInput) -> str:
    """Update Cov and Pop together; returns which case applied."""
    path, size = record.path, record.size
    if path not in cov._samples:
        cov._samples[path] = [(size, record.cost)]
        cov._index[path] = {size: 0}
        pop._inputs[path] = [x]
        return "path"
    idx = cov._index[path].get(size)
    if idx is None:
        cov._index[path][size] = len(cov._samples[path])
        cov._samples[path].append((size, record.cost))
        pop._inputs[path].append(x)
        return "size"
    cov._samples[path][idx] = (size, record.cost)
    pop._inputs[path][idx] = x
    return "improve"


# ---------------------------------------------------------------------------
# mutation and crossover

_INTERESTING = {
    1: (0, 1, 2, 4, 8, 16, 32, 64, 128, 0x7F, 0xFF),
    2: (0, 1, 2, 4, 16, 64, 256, 1024, 0x7FFF, 0x8000, 0xFFFF),
    4: (0, 1, 2, 16, 256, 65536, 0x7FFFFFFF, 0x80000000, 0xFFFFFFFF),
}

N_BYTE_OPS = 8


def _mutate_bytes(data: bytes, rng: SplitMix64, domain: ByteDomain) -> bytes:
    op = rng.below(N_BYTE_OPS)
    buf = bytearray(data)
    if not buf and op != 2:
        op = 2  # only growth applies to empty payloads
    if op == 0:  # bit flip
        i = rng.below(len(buf))
        buf[i] ^= 1 << rng.below(8)
    elif op == 1:  # random byte replace
        buf[rng.below(len(buf))] = rng.below(256)
    elif op == 2:  # byte insert
        pos = rng.below(len(buf) + 1)
        buf.insert(pos, rng.below(256))
    elif op == 3:  # byte delete
        del buf[rng.below(len(buf))]
    elif op == 4:  # block duplicate
        i = rng.below(len(buf))
        length = 1 + rng.below(min(16, len(buf) - i))
        buf[i + length:i + length] = buf[i:i + length]
    elif op == 5:  # block shuffle
        i = rng.below(len(buf))
        length = 1 + rng.below(min(16, len(buf) - i))
        chunk = list(buf[i:i + length])
        rng.shuffle(chunk)
        buf[i:i + length] = bytes(chunk)
    elif op == 6:  # arithmetic +/- delta on a 1/2/4-byte word
        width = rng.choice((1, 2, 4))
        if len(buf) < width:
            width = 1
        pos = rng.below(len(buf) - width + 1)
        word = int.from_bytes(buf[pos:pos + width], "little")
        delta = 1 + rng.below(16)
        if rng.chance(0.5):
            delta = -delta
        word = (word + delta) % (1 << (8 * width))
        buf[pos:pos + width] = word.to_bytes(width, "little")
    else:  # interesting-value substitution
        width = rng.choice((1, 2, 4))
        if len(buf) < width:
            width = 1
        pos = rng.below(len(buf) - width + 1)
        value = rng.choice(_INTERESTING[width])
        buf[pos:pos + width] = value.to_bytes(width, "little")
    return domain.clamp_data(bytes(buf))


N_RECORD_OPS = 8


def _mutate_record(x: TargetInput, rng: SplitMix64, domain: RecordDomain,
                   partner: TargetInput | None = None) -> TargetInput:
    params = dict(x.params)
    shape = x.shape
    fields = domain.fields
    op = rng.below(N_RECORD_OPS)
    f = fields[rng.below(len(fields))]
    if op == 0:  # categorical resample / random reset for numerics
        params[f.name] = f.sample(rng)
    elif op == 1:  # numeric perturb +/-10%
        v = params[f.name]
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            factor = 1.0 + (0.1 if rng.chance(0.5) else -0.1)
            nv = v * factor if v != 0 else (1 if rng.chance(0.5) else -1)
            params[f.name] = f.clamp(nv)
        else:
            params[f.name] = f.sample(rng)
    elif op == 2:  # boundary value
        if hasattr(f, "lo"):
            params[f.name] = f.lo if rng.chance(0.5) else f.hi
        else:
            params[f.name] = f.values[0] if rng.chance(0.5) else f.values[-1]
    elif op == 3:  # zero value
        params[f.name] = f.clamp(0)
    elif op == 4:  # field copy from partner (random reset without one)
        if partner is not None and not partner.is_bytes and f.name in partner.params:
            v = partner.params[f.name]
            params[f.name] = v if f.contains(v) else f.clamp(v)
        else:
            params[f.name] = f.sample(rng)
    elif op == 5:  # random reset
        params[f.name] = f.sample(rng)
    elif op == 6 and shape is not None:  # shape increment
        which = rng.below(2)
        shape = (shape[0] + (1 - which), shape[1] + which)
    elif op == 7 and shape is not None:  # shape decrement
        which = rng.below(2)
        shape = (max(0, shape[0] - (1 - which)), max(0, shape[1] - which))
    else:
        params[f.name] = f.sample(rng)
    return domain.clamp(TargetInput(params=params, shape=shape))


def mutate(x: TargetInput, rng: SplitMix64, domain: InputDomain,
           partner: TargetInput | None = None) -> TargetInput:
    """Apply one operator drawn uniformly from the 8-operator set and
    re-clamp the result into the input domain."""
    if x.is_bytes:
        if not isinstance(domain, ByteDomain):
            raise FuzzConfigError("byte input with non-byte domain")
        return TargetInput(data=_mutate_bytes(x.data, rng, domain))
    if not isinstance(domain, RecordDomain):
        raise FuzzConfigError("record input with non-record domain")
    return _mutate_record(x, rng, domain, partner)


def _splice(a: bytes, b: bytes, cut_a: int, cut_b: int) -> bytes:
    return a[:cut_a] + b[cut_b:]


def crossover(a: TargetInput, b: TargetInput, rng: SplitMix64,
              domain: InputDomain | None = None) -> TargetInput:
    """Single-point splice for bytes; random field swap for records."""
    if a.is_bytes != b.is_bytes:
        raise CrossoverKindError("cannot cross byte and record payloads")
    if a.is_bytes:
        child = _splice(a.data, b.data, rng.below(len(a.data) + 1),
                        rng.below(len(b.data) + 1))
        if domain is not None:
            child = domain.clamp_data(child)
        return TargetInput(data=child)
    params = dict(a.params)
    for name in params:
        if name in b.params and rng.chance(0.5):
            params[name] = b.params[name]
    shape = a.shape
    out = TargetInput(params=params, shape=shape)
    return domain.clamp(out) if isinstance(domain, RecordDomain) else out


# ---------------------------------------------------------------------------
# selection

def select(clusters: ClusterSet | None, cov: CoverageMap, pop: PopulationMap,
           rng: SplitMix64) -> TargetInput:
    """Cluster uniformly, then path and input by cost-proportional weight."""
    x, _ = _select_with_path(clusters, cov, pop, rng)
    return x


def _select_with_path(clusters: ClusterSet | None, cov: CoverageMap,
                      pop: PopulationMap, rng: SplitMix64) -> tuple[TargetInput, int]:
    if len(pop) == 0:
        raise FuzzStateError("empty population")
    groups: list[list[int]] = []
    assigned = clusters.assignment if clusters is not None else {}
    if clusters is not None and clusters.k > 0:
        buckets: dict[int, list[int]] = {c: [] for c in range(clusters.k)}
        for path in cov.paths():
            c = assigned.get(path)
            if c is not None:
                buckets[c].append(path)
        groups.extend(b for b in buckets.values() if b)
    # Paths not yet covered by a clustering round stay reachable through a
    # pseudo-cluster of their own.
    pending = [p for p in cov.paths() if p not in assigned]
    if pending:
        groups.append(pending)
    paths = groups[rng.below(len(groups))]
    weights = []
    for p in paths:
        score = cov.best_cost(p)
        weights.append(score if score > 0 else FALLBACK_WEIGHT)
    path = paths[rng.weighted_index(weights)]
    samples = cov.samples(path)
    sample_weights = [c if c > 0 else FALLBACK_WEIGHT for _, c in samples]
    idx = rng.weighted_index(sample_weights)
    return pop.inputs(path)[idx], path


# ---------------------------------------------------------------------------
# population policies

class _DpfuzzPolicy:
    name = POLICY_DPFUZZ

    def __init__(self, cov: CoverageMap, pop: PopulationMap) -> None:
        self.cov = cov
        self.pop = pop
        self.clusters: ClusterSet | None = None

    def admit(self, record: ExecutionRecord) -> bool:
        return admit(self.cov, record)

    def on_admit(self, record: ExecutionRecord, x: TargetInput) -> None:
        pass

    def select(self, rng: SplitMix64) -> tuple[TargetInput, int]:
        return _select_with_path(self.clusters, self.cov, self.pop, rng)


class _SlowfuzzPolicy:
    """Single global population; only new global cost records survive."""

    name = POLICY_SLOWFUZZ

    def __init__(self, cov: CoverageMap, pop: PopulationMap) -> None:
        self.cov = cov
        self.pop = pop
        self.best = -math.inf
        self.pool: list[tuple[TargetInput, int]] = []

    def admit(self, record: ExecutionRecord) -> bool:
        return record.status == STATUS_OK and record.cost > self.best

    def on_admit(self, record: ExecutionRecord, x: TargetInput) -> None:
        self.best = max(self.best, record.cost)
        self.pool.append((x, record.path))

    def select(self, rng: SplitMix64) -> tuple[TargetInput, int]:
        if not self.pool:
            raise FuzzStateError("empty population")
        return rng.choice(self.pool)


class _PerffuzzPolicy:
    """Admit on new edges or new per-edge cost records; select among the
    inputs currently holding at least one per-edge record."""

    name = POLICY_PERFFUZZ

    def __init__(self, cov: CoverageMap, pop: PopulationMap) -> None:
        self.cov = cov
        self.pop = pop
        self.edge_best: dict[int, float] = {}
        self.edge_owner: dict[int, tuple[TargetInput, int]] = {}

    def admit(self, record: ExecutionRecord) -> bool:
        if record.status != STATUS_OK:
            return False
        return any(self.edge_best.get(e, -math.inf) < record.cost
                   for e in record.edge_set) or \
            any(e not in self.edge_best for e in record.edge_set)

    def on_admit(self, record: ExecutionRecord, x: TargetInput) -> None:
        owner = (x, record.path)
        for e in record.edge_set:
            if self.edge_best.get(e, -math.inf) < record.cost:
                self.edge_best[e] = record.cost
                self.edge_owner[e] = owner

    def select(self, rng: SplitMix64) -> tuple[TargetInput, int]:
        owners: list[tuple[TargetInput, int]] = []
        seen: set[int] = set()
        for owner in self.edge_owner.values():
            if id(owner) not in seen:
                seen.add(id(owner))
                owners.append(owner)
        if not owners:
            raise FuzzStateError("empty population")
        return rng.choice(owners)


def _make_policy(name: str, cov: CoverageMap, pop: PopulationMap):
    if name == POLICY_DPFUZZ:
        return _DpfuzzPolicy(cov, pop)
    if name == POLICY_SLOWFUZZ:
        return _SlowfuzzPolicy(cov, pop)
    if name == POLICY_PERFFUZZ:
        return _PerffuzzPolicy(cov, pop)
    raise FuzzConfigError(f"unknown policy {name!r}")


def policy_step(policy, record: ExecutionRecord, x: TargetInput) -> bool:
    """Run one admit decision and, on success, the policy's bookkeeping."""
    if policy.admit(record):
        _insert(policy.cov, policy.pop, record, x)
        policy.on_admit(record, x)
        return True
    return False


# ---------------------------------------------------------------------------
# configuration and results

@dataclass
class FuzzConfig:
    """Knobs of the evolutionary loop."""

    max_iterations: int = 60_000
    cluster_interval: int = 1_000
    epsilon: float | None = None  # auto: 5% of the median pairwise distance
    sigma: float | None = None    # auto: 4 * epsilon
    target_clusters: int = 8
    time_budget: float = 600.0
    rng_seed: int = 0
    policy: str = POLICY_DPFUZZ
    seeds: tuple[TargetInput, ...] = ()
    crossover_prob: float = 0.2
    grid_max_points: int = 512

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise FuzzConfigError("max_iterations must be >= 1")
        if self.cluster_interval < 1:
            raise FuzzConfigError("cluster_interval must be >= 1")
        if self.target_clusters < 1:
            raise FuzzConfigError("target_clusters must be >= 1")
        if self.epsilon is not None and self.epsilon < 0:
            raise FuzzConfigError("epsilon must be >= 0")
        if self.sigma is not None and self.sigma <= 0:
            raise FuzzConfigError("sigma must be > 0")
        if self.policy not in POLICIES:
            raise FuzzConfigError(f"unknown policy {self.policy!r}")
        if self.time_budget < 0:
            raise FuzzConfigError("time_budget must be >= 0")


@dataclass
class FuzzResult:
    """Everything one fuzzing run produced."""

    coverage: CoverageMap
    population: PopulationMap
    clusters: ClusterSet | None
    functions: list[PerfFunction]
    iterations: int
    samples: int
    events: list[dict]
    policy: str
    epsilon: float | None
    sigma: float | None
    grid: Grid | None


def fit_functions(cov: CoverageMap) -> list[PerfFunction]:
    """Fit every path with at least two distinct sizes; skip the rest."""
    out = []
    for path, samples in cov.items():
        try:
            out.append(fit_perf_function(path, samples))
        except UnmodeledPathError:
            continue
    return out


def _auto_epsilon(functions: Sequence[PerfFunction], grid: Grid) -> float:
    dm = pairwise_distances(functions, grid).values
    n = len(functions)
    vals = sorted(float(dm[i, j]) for i in range(n) for j in range(i + 1, n))
    median = vals[len(vals) // 2]
    return 0.05 * median


class _Engine:
    def __init__(self, spec: TargetSpec, config: FuzzConfig, target=None) -> None:
        self.spec = spec
        self.config = config
        self.target = target
        self.cov = CoverageMap()
        self.pop = PopulationMap()
        self.policy = _make_policy(config.policy, self.cov, self.pop)
        self.rng = SplitMix64(config.rng_seed)
        self.cluster_rng_seed = SplitMix64(config.rng_seed ^ 0xC1057E55EED).u64()
        self.events: list[dict] = []
        self.samples = 0
        self.epsilon = config.epsilon
        self.sigma = config.sigma
        self.grid: Grid | None = None
        self.clusters: ClusterSet | None = None

    def run_one(self, x: TargetInput) -> ExecutionRecord:
        record = run_instrumented(self.spec, x, target=self.target)
        self.samples += 1
        return record

    def recluster(self, step: int) -> None:
        functions = fit_functions(self.cov)
        if not functions:
            self.clusters = None
            return
        self.grid = Grid.auto(self.cov.max_size(), self.config.grid_max_points)
        if self.epsilon is None and len(functions) >= 2:
            self.epsilon = _auto_epsilon(functions, self.grid)
            if self.sigma is None:
                self.sigma = 4 * self.epsilon if self.epsilon > 0 else 1e-9
        eps = self.epsilon if self.epsilon is not None else 0.0
        self.clusters = cluster(functions, eps, self.grid, self.cluster_rng_seed)
        sigma = self.sigma if self.sigma is not None else 4 * eps
        self.clusters.separated_count = separated_count(self.clusters, sigma or 1e-9)
        if isinstance(self.policy, _DpfuzzPolicy):
            self.policy.clusters = self.clusters
        self.events.append({
            "type": "cluster", "step": step, "functions": len(functions),
            "k": self.clusters.k, "separated": self.clusters.separated_count,
            "epsilon": eps,
        })

    def pick_partner(self, path: int) -> TargetInput:
        same = self.pop.inputs(path)
        if len(same) >= 2:
            return self.rng.choice(same)
        total = self.pop.total_inputs()
        idx = self.rng.below(total)
        for inputs in self.pop._inputs.values():
            if idx < len(inputs):
                return inputs[idx]
            idx -= len(inputs)
        raise FuzzStateError("empty population")


def _encode_input(x: TargetInput) -> dict:
    if x.is_bytes:
        return {"data": x.data.hex()}
    return {"params": dict(x.params), "shape": list(x.shape) if x.shape else None}


def fuzz(spec: TargetSpec, config: FuzzConfig, target=None) -> FuzzResult:
    """Run the evolutionary loop and return coverage, populations, and the
    final clustering."""
    if not config.seeds:
        raise FuzzConfigError("seed corpus must not be empty")
    for x in config.seeds:
        if not spec.domain.contains(x):
            raise FuzzConfigError("seed outside the target input domain")

    eng = _Engine(spec, config, target)
    for x in config.seeds:
        record = eng.run_one(x)
        if record.status != STATUS_OK:
            raise FuzzConfigError(
                f"seed execution failed with status {record.status}")
        _insert(eng.cov, eng.pop, record, x)
        eng.policy.on_admit(record, x)
        eng.events.append({"type": "seed", "path": record.path,
                           "size": record.size, "cost": record.cost})

    is_dpfuzz = config.policy == POLICY_DPFUZZ
    if is_dpfuzz:
        eng.recluster(step=0)

    deadline = time.monotonic() + config.time_budget
    step = 1
    stop_reason = "iterations"
    while step <= config.max_iterations:
        if time.monotonic() > deadline:
            stop_reason = "budget"
            break
        if is_dpfuzz and eng.clusters is not None and \
                (eng.clusters.separated_count or 0) >= config.target_clusters:
            stop_reason = "separated"
            break
        if is_dpfuzz and step % config.cluster_interval == 0:
            eng.recluster(step)
        x, path = eng.policy.select(eng.rng)
        candidate = mutate(x, eng.rng, spec.domain)
        if eng.rng.chance(config.crossover_prob):
            partner = eng.pick_partner(path)
            try:
                candidate = crossover(candidate, partner, eng.rng, spec.domain)
            except CrossoverKindError:
                pass
        record = eng.run_one(candidate)
        if record.status != STATUS_OK:
            eng.events.append({"type": "status", "step": step,
                               "status": record.status,
                               "input": _encode_input(candidate)})
        elif policy_step(eng.policy, record, candidate):
            eng.events.append({"type": "admit", "step": step,
                               "path": record.path, "size": record.size,
                               "cost": record.cost})
        step += 1
    iterations = step - 1
    eng.events.append({"type": "stop", "reason": stop_reason,
                       "iterations": iterations})
    eng.recluster(step=iterations)  # final clustering for every policy
    return FuzzResult(
        coverage=eng.cov,
        population=eng.pop,
        clusters=eng.clusters,
        functions=fit_functions(eng.cov),
        iterations=iterations,
        samples=eng.samples,
        events=eng.events,
        policy=config.policy,
        epsilon=eng.epsilon,
        sigma=eng.sigma,
        grid=eng.grid,
    )
