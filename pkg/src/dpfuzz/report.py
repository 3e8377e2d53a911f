"""Run bundles, metrics, and plot emission.

A run bundle is a directory holding everything the fuzzing run produced:

    results.json    deterministic snapshot (config, coverage, populations,
                    clusters, event log); byte-identical across reruns
                    with the same seed
    functions.csv   fitted performance functions, one row per path
    metrics.csv     the summary metrics row(s)
    clusters.svg    size-versus-cost curves colored by cluster
    meta.json       wall-clock timing (the only nondeterministic part)

The metrics follow the usual comparison table: samples generated (#N),
worst cost (W), unique paths (#P), distinct performance functions (#M,
fits whose residual is below a relative threshold), and functional
clusters by the elbow rule (#K).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .fuzzing import CoverageMap, FuzzConfig, FuzzResult, PopulationMap, fit_functions
from .harness import COST_LINES, TargetSpec
from .inputs import TargetInput
from .perfmodel import ClusterSet, Grid, PerfFunction, elbow_k

SCHEMA_VERSION = 1

#: A fit counts as a distinct performance function when its mean absolute
#: residual stays below this fraction of the path's mean cost.
FIT_RESIDUAL_FRACTION = 0.20

#: Elbow threshold for executed-lines cost.
ELBOW_THRESHOLD_LINES = 1000.0

#: In wall-clock mode the threshold self-normalizes to this fraction of
#: the single-cluster error.
ELBOW_FRACTION_TIME = 0.05

RESULTS_JSON = "results.json"
FUNCTIONS_CSV = "functions.csv"
METRICS_CSV = "metrics.csv"
CLUSTERS_SVG = "clusters.svg"
META_JSON = "meta.json"
TREES_JSON = "trees.json"
PREDICATES_TXT = "predicates.txt"

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass
class MetricsRow:
    target: str
    policy: str
    samples: int        # N
    worst: float        # W
    paths: int          # P
    functions: int      # M
    clusters: int       # K
    wall_secs: float = 0.0


def _fmt_num(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return f"{v:g}"


def render_metrics_row(row: MetricsRow) -> str:
    return (f"{row.target} | {row.policy} | #N={row.samples} | "
            f"W={_fmt_num(row.worst)} | #P={row.paths} | "
            f"#M={row.functions} | #K={row.clusters}")


def render_metrics_table(rows: Sequence[MetricsRow]) -> str:
    return "\n".join(render_metrics_row(r) for r in rows)


def qualifying_functions(cov: CoverageMap,
                         functions: Sequence[PerfFunction],
                         residual_fraction: float = FIT_RESIDUAL_FRACTION
                         ) -> list[PerfFunction]:
    """Fits accurate enough to count as distinct performance functions."""
    out = []
    for f in functions:
        samples = cov.samples(f.path)
        mean_cost = sum(c for _, c in samples) / len(samples)
        if f.residual <= residual_fraction * max(mean_cost, 1e-9):
            out.append(f)
    return out


def _elbow_threshold(cost_mode: str, functions: Sequence[PerfFunction],
                     grid: Grid, rng_seed: int) -> float:
    if cost_mode == COST_LINES:
        return ELBOW_THRESHOLD_LINES
    # Wall-clock costs have no fixed scale; fall back to a fraction of the
    # total single-cluster error.
    import numpy as np

    X = np.stack([f.evaluate(grid) for f in functions])
    base = float(np.abs(X - X.mean(axis=0)).sum()) * grid.step
    return max(ELBOW_FRACTION_TIME * base, 1e-9)


def compute_metrics(target: str, result: FuzzResult, cost_mode: str = COST_LINES,
                    wall_secs: float = 0.0, rng_seed: int = 0) -> MetricsRow:
    cov = result.coverage
    functions = result.functions
    qualifying = qualifying_functions(cov, functions)
    if qualifying:
        grid = result.grid or Grid.auto(cov.max_size())
        threshold = _elbow_threshold(cost_mode, qualifying, grid, rng_seed)
        k = elbow_k(qualifying, threshold, grid, rng_seed)
    else:
        k = 0
    return MetricsRow(
        target=target,
        policy=result.policy,
        samples=result.samples,
        worst=cov.global_max(),
        paths=len(cov),
        functions=len(qualifying),
        clusters=k,
        wall_secs=wall_secs,
    )


# ---------------------------------------------------------------------------
# serialization

def _encode_input(x: TargetInput) -> dict:
    if x.is_bytes:
        return {"data": x.data.hex()}
    return {"params": dict(x.params), "shape": list(x.shape) if x.shape else None}


def _decode_input(obj: Mapping[str, Any]) -> TargetInput:
    if "data" in obj:
        return TargetInput(data=bytes.fromhex(obj["data"]))
    shape = tuple(obj["shape"]) if obj.get("shape") else None
    return TargetInput(params=dict(obj["params"]), shape=shape)


def _encode_clusters(clusters: ClusterSet | None) -> dict | None:
    if clusters is None:
        return None
    return {
        "k": clusters.k,
        "epsilon": clusters.epsilon if math.isfinite(clusters.epsilon) else None,
        "separated": clusters.separated_count,
        "assignment": {str(p): c for p, c in clusters.assignment.items()},
        "grid": {"lo": clusters.grid.lo, "hi": clusters.grid.hi,
                 "step": clusters.grid.step},
        "centroids": [[float(v) for v in row] for row in clusters.centroids],
    }


def results_to_json(target: str, spec: TargetSpec, config: FuzzConfig,
                    result: FuzzResult,
                    external_argv: Sequence[str] | None = None) -> str:
    doc = {
        "dpfuzz_schema": SCHEMA_VERSION,
        "target": target,
        "external_argv": list(external_argv) if external_argv else None,
        "cost_mode": spec.cost_mode,
        "policy": result.policy,
        "config": {
            "max_iterations": config.max_iterations,
            "cluster_interval": config.cluster_interval,
            "epsilon": config.epsilon,
            "sigma": config.sigma,
            "target_clusters": config.target_clusters,
            "time_budget": config.time_budget,
            "rng_seed": config.rng_seed,
            "crossover_prob": config.crossover_prob,
            "grid_max_points": config.grid_max_points,
            "seeds": [_encode_input(s) for s in config.seeds],
        },
        "iterations": result.iterations,
        "samples": result.samples,
        "epsilon": result.epsilon,
        "sigma": result.sigma,
        "coverage": {str(p): [[n, c] for n, c in ss]
                     for p, ss in result.coverage.items()},
        "population": {str(p): [_encode_input(x) for x in xs]
                       for p, xs in result.population.items()},
        "clusters": _encode_clusters(result.clusters),
        "events": result.events,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass
class LoadedBundle:
    """A run bundle re-read from disk."""

    target: str
    cost_mode: str
    policy: str
    config: dict
    coverage: CoverageMap
    population: PopulationMap
    cluster_assignment: dict[int, int]
    grid: Grid | None
    events: list[dict]
    samples: int
    iterations: int
    wall_secs: float
    path: str
    external_argv: list[str] | None = None


def load_bundle(run_dir: str) -> LoadedBundle:
    results_path = os.path.join(run_dir, RESULTS_JSON)
    with open(results_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("dpfuzz_schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported bundle schema in {results_path}")
    cov = CoverageMap()
    pop = PopulationMap()
    for key, samples in doc["coverage"].items():
        path = int(key)
        cov._samples[path] = [(int(n), float(c)) for n, c in samples]
        cov._index[path] = {int(n): i for i, (n, _) in enumerate(samples)}
    for key, inputs in doc["population"].items():
        pop._inputs[int(key)] = [_decode_input(o) for o in inputs]
    assignment = {}
    grid = None
    if doc.get("clusters"):
        assignment = {int(p): int(c)
                      for p, c in doc["clusters"]["assignment"].items()}
        g = doc["clusters"]["grid"]
        grid = Grid(g["lo"], g["hi"], g["step"])
    wall = 0.0
    meta_path = os.path.join(run_dir, META_JSON)
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            wall = float(json.load(fh).get("wall_secs", 0.0))
    return LoadedBundle(
        target=doc["target"],
        cost_mode=doc["cost_mode"],
        policy=doc["policy"],
        config=doc["config"],
        coverage=cov,
        population=pop,
        cluster_assignment=assignment,
        grid=grid,
        events=doc["events"],
        samples=doc["samples"],
        iterations=doc["iterations"],
        wall_secs=wall,
        path=run_dir,
        external_argv=doc.get("external_argv"),
    )


def functions_csv(functions: Sequence[PerfFunction],
                  assignment: Mapping[int, int] | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["path_id", "kind", "a", "b", "n_min", "n_max",
                     "residual", "sample_count", "cluster"])
    assignment = assignment or {}
    for f in sorted(functions, key=lambda f: f.path):
        cluster = assignment.get(f.path, "")
        writer.writerow([f.path, f.kind, repr(f.a), repr(f.b), f.n_min,
                         f.n_max, repr(f.residual), f.sample_count, cluster])
    return buf.getvalue()


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target", "policy", "samples", "worst_cost", "paths",
                     "functions", "clusters", "wall_secs"])
    for r in rows:
        writer.writerow([r.target, r.policy, r.samples, _fmt_num(r.worst),
                         r.paths, r.functions, r.clusters, f"{r.wall_secs:.3f}"])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG plot

def emit_plot(functions: Sequence[PerfFunction], clusters: ClusterSet | None,
              grid: Grid | None, width: int = 640, height: int = 420) -> str:
    """Size-versus-cost polylines, one per function, colored by cluster.

    Pure-text SVG with fixed float formatting, so identical inputs give
    identical bytes.
    """
    margin = 50
    header = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
              f'height="{height}" viewBox="0 0 {width} {height}">\n')
    if not functions or grid is None:
        return (header
                + f'<text x="{width // 2}" y="{height // 2}" text-anchor="middle" '
                  f'font-family="monospace">no performance functions</text>\n</svg>\n')
    pts = grid.points
    curves = [f.evaluate(grid) for f in functions]
    y_max = max(max(float(c.max()) for c in curves), 1.0)
    x_min, x_max = float(pts[0]), float(pts[-1])
    x_span = max(x_max - x_min, 1.0)

    def sx(x: float) -> float:
        return margin + (x - x_min) / x_span * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y / y_max) * (height - 2 * margin)

    parts = [header]
    parts.append(f'<rect x="0" y="0" width="{width}" height="{height}" '
                 f'fill="white"/>\n')
    # axes
    parts.append(f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
                 f'y2="{height - margin}" stroke="black"/>\n')
    parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
                 f'y2="{height - margin}" stroke="black"/>\n')
    parts.append(f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle" '
                 f'font-family="monospace" font-size="12">input size</text>\n')
    parts.append(f'<text x="14" y="{height // 2}" text-anchor="middle" '
                 f'font-family="monospace" font-size="12" '
                 f'transform="rotate(-90 14 {height // 2})">cost</text>\n')
    parts.append(f'<text x="{margin}" y="{height - margin + 16}" '
                 f'font-family="monospace" font-size="10">{_fmt_num(x_min)}</text>\n')
    parts.append(f'<text x="{width - margin}" y="{height - margin + 16}" '
                 f'text-anchor="end" font-family="monospace" font-size="10">'
                 f'{_fmt_num(x_max)}</text>\n')
    parts.append(f'<text x="{margin - 4}" y="{margin}" text-anchor="end" '
                 f'font-family="monospace" font-size="10">{y_max:.1f}</text>\n')
    assignment = clusters.assignment if clusters is not None else {}
    for f, curve in zip(functions, curves):
        c = assignment.get(f.path, 0)
        color = _PALETTE[c % len(_PALETTE)]
        coords = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}"
                          for x, y in zip(pts, curve))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{coords}"/>\n')
    # legend: one line per function
    for i, f in enumerate(sorted(functions, key=lambda f: f.path)):
        c = assignment.get(f.path, 0)
        color = _PALETTE[c % len(_PALETTE)]
        y = margin + 14 * i
        parts.append(f'<rect x="{width - margin - 150}" y="{y - 8}" width="10" '
                     f'height="10" fill="{color}"/>\n')
        parts.append(f'<text x="{width - margin - 135}" y="{y}" '
                     f'font-family="monospace" font-size="10">'
                     f'path {f.path & 0xFFFF:04x} (cluster {c})</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)


# ---------------------------------------------------------------------------
# bundle IO

def save_bundle(run_dir: str, target: str, spec: TargetSpec, config: FuzzConfig,
                result: FuzzResult, wall_secs: float, rng_seed: int = 0,
                external_argv: Sequence[str] | None = None) -> MetricsRow:
    os.makedirs(run_dir, exist_ok=True)
    row = compute_metrics(target, result, spec.cost_mode, wall_secs, rng_seed)
    assignment = result.clusters.assignment if result.clusters else {}
    _write(run_dir, RESULTS_JSON,
           results_to_json(target, spec, config, result, external_argv))
    _write(run_dir, FUNCTIONS_CSV, functions_csv(result.functions, assignment))
    _write(run_dir, METRICS_CSV, metrics_csv([row]))
    _write(run_dir, CLUSTERS_SVG,
           emit_plot(result.functions, result.clusters, result.grid))
    _write(run_dir, META_JSON,
           json.dumps({"wall_secs": wall_secs}, sort_keys=True) + "\n")
    return row


def regenerate_bundle_outputs(bundle: LoadedBundle, rng_seed: int = 0) -> MetricsRow:
    """Recompute functions.csv, metrics.csv, and the plot from results.json.

    Uses the stored wall time, so repeated invocations are byte-identical.
    """
    functions = fit_functions(bundle.coverage)
    qualifying_assignment = bundle.cluster_assignment
    grid = bundle.grid
    if grid is None and len(bundle.coverage):
        grid = Grid.auto(bundle.coverage.max_size(),
                         bundle.config.get("grid_max_points", 512))
    qualifying = qualifying_functions(bundle.coverage, functions)
    if qualifying and grid is not None:
        threshold = _elbow_threshold(bundle.cost_mode, qualifying, grid, rng_seed)
        k = elbow_k(qualifying, threshold, grid, rng_seed)
    else:
        k = 0
    row = MetricsRow(
        target=bundle.target,
        policy=bundle.policy,
        samples=bundle.samples,
        worst=bundle.coverage.global_max(),
        paths=len(bundle.coverage),
        functions=len(qualifying),
        clusters=k,
        wall_secs=bundle.wall_secs,
    )
    _write(bundle.path, FUNCTIONS_CSV,
           functions_csv(functions, qualifying_assignment))
    _write(bundle.path, METRICS_CSV, metrics_csv([row]))
    if grid is not None:
        fake = None
        if qualifying_assignment:
            # rebuild a minimal ClusterSet view for coloring
            import numpy as np

            k_colors = max(qualifying_assignment.values()) + 1
            fake = ClusterSet(k=k_colors, assignment=qualifying_assignment,
                              centroids=np.zeros((k_colors, 1)),
                              grid=grid, epsilon=0.0)
        _write(bundle.path, CLUSTERS_SVG, emit_plot(functions, fake, grid))
    return row


def crash_summary(events: Sequence[Mapping[str, Any]]) -> dict[str, int]:
    out = {"crash": 0, "timeout": 0}
    for ev in events:
        if ev.get("type") == "status" and ev.get("status") in out:
            out[ev["status"]] += 1
    return out


def _write(run_dir: str, name: str, text: str) -> None:
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
