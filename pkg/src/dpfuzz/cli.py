"""Command-line driver.

Subcommands:

    dpfuzz fuzz     run one fuzzing campaign and persist a run bundle
    dpfuzz compare  run the dpfuzz/slowfuzz/perffuzz policies side by side
    dpfuzz explain  learn discriminant trees for a saved bundle
    dpfuzz report   reprint and regenerate a saved bundle's outputs
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
import time
from dataclasses import replace

from . import report as rpt
from .explain import Leaf, Split, TreeConfig, TreeNode, explain
from .fuzzing import POLICIES, POLICY_DPFUZZ, FuzzConfig, fuzz, fit_functions
from .harness import COST_LINES, COST_TIME, DEFAULT_TIMEOUT_SECS, TargetSpec
from .inputs import ByteDomain, TargetInput
from .perfmodel import Grid, cluster_at_k
from .targets import BUILTIN_TARGETS, get_target, target_names
from .tracefmt import ExternalTarget

_EXTERNAL_SEEDS = tuple(TargetInput(data=bytes(range(n))) for n in (4, 8, 16, 24))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpfuzz",
        description="differential performance fuzzing toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_target_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--target", help="built-in target name "
                       f"({', '.join(target_names())})")
        p.add_argument("--external-cmd",
                       help="external program command line (reports traces via "
                            "DPFUZZ_TRACE_FILE)")
        p.add_argument("--budget-secs", type=float, default=600.0,
                       help="wall-clock budget for the fuzzing loop")
        p.add_argument("--iterations", type=int, default=60_000,
                       help="maximum number of mutation iterations")
        p.add_argument("--epsilon", type=float, default=None,
                       help="within-cluster tolerance (default: auto)")
        p.add_argument("--sigma", type=float, default=None,
                       help="cluster separation bound (default: 4*epsilon)")
        p.add_argument("--k", type=int, default=8,
                       help="stop once this many separated clusters exist")
        p.add_argument("--cluster-interval", type=int, default=1_000,
                       help="steps between clustering rounds")
        p.add_argument("--seed", type=int, default=0, help="RNG seed")
        p.add_argument("--cost-mode", choices=(COST_LINES, COST_TIME),
                       default=COST_LINES)
        p.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT_SECS,
                       help="per-execution timeout")

    p_fuzz = sub.add_parser("fuzz", help="run one fuzzing campaign")
    add_target_args(p_fuzz)
    p_fuzz.add_argument("--policy", choices=POLICIES, default=POLICY_DPFUZZ)
    p_fuzz.add_argument("--out", required=True, help="run bundle directory")

    p_cmp = sub.add_parser("compare", help="run all three policies")
    add_target_args(p_cmp)
    p_cmp.add_argument("--repeat", type=int, default=1,
                       help="repetitions per policy")
    p_cmp.add_argument("--report", choices=("best", "median"), default="best",
                       dest="aggregate", help="how to aggregate repetitions")
    p_cmp.add_argument("--out", required=True, help="output directory")

    p_exp = sub.add_parser("explain", help="learn discriminant trees")
    p_exp.add_argument("--run", required=True, help="run bundle directory")
    p_exp.add_argument("--k", type=int, default=None,
                       help="re-cluster into exactly k clusters first")
    p_exp.add_argument("--space", choices=("input", "internal", "both"),
                       default="both")
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--max-depth", type=int, default=5)
    p_exp.add_argument("--timeout-secs", type=float, default=DEFAULT_TIMEOUT_SECS)

    p_rep = sub.add_parser("report", help="reprint a saved bundle")
    p_rep.add_argument("--run", required=True, help="run bundle directory")

    return parser


def _resolve_target(args) -> tuple[str, object, tuple[TargetInput, ...]]:
    if bool(args.target) == bool(args.external_cmd):
        raise SystemExit2("exactly one of --target/--external-cmd is required")
    if args.target:
        tgt = get_target(args.target)
        return tgt.name, tgt, tgt.seeds
    argv = tuple(shlex.split(args.external_cmd))
    tgt = ExternalTarget(argv=argv)
    return tgt.name, tgt, _EXTERNAL_SEEDS


class SystemExit2(SystemExit):
    def __init__(self, message: str) -> None:
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def _make_spec(args, name: str, target) -> TargetSpec:
    return TargetSpec(name=name, domain=target.domain, cost_mode=args.cost_mode,
                      timeout_secs=args.timeout_secs)


def _make_config(args, seeds, policy: str, rng_seed: int) -> FuzzConfig:
    return FuzzConfig(
        max_iterations=args.iterations,
        cluster_interval=args.cluster_interval,
        epsilon=args.epsilon,
        sigma=args.sigma,
        target_clusters=args.k,
        time_budget=args.budget_secs,
        rng_seed=rng_seed,
        policy=policy,
        seeds=tuple(seeds),
    )


def _run_campaign(args, name, target, spec, config, out_dir: str):
    t0 = time.perf_counter()
    result = fuzz(spec, config, target=target)
    wall = time.perf_counter() - t0
    external_argv = target.argv if isinstance(target, ExternalTarget) else None
    row = rpt.save_bundle(out_dir, name, spec, config, result, wall,
                          rng_seed=config.rng_seed, external_argv=external_argv)
    return result, row


def cmd_fuzz(args) -> int:
    name, target, seeds = _resolve_target(args)
    spec = _make_spec(args, name, target)
    config = _make_config(args, seeds, args.policy, args.seed)
    result, row = _run_campaign(args, name, target, spec, config, args.out)
    print(rpt.render_metrics_row(row))
    crashes = rpt.crash_summary(result.events)
    if crashes["crash"] or crashes["timeout"]:
        print(f"crashes={crashes['crash']} timeouts={crashes['timeout']} "
              f"(inputs recorded in results.json events)")
    print(f"bundle written to {args.out}")
    return 0


def _aggregate(rows, how: str) -> rpt.MetricsRow:
    import statistics

    def agg(vals):
        if how == "best":
            return max(vals)
        return statistics.median(vals)

    base = rows[0]
    return rpt.MetricsRow(
        target=base.target,
        policy=base.policy,
        samples=int(agg([r.samples for r in rows])),
        worst=agg([r.worst for r in rows]),
        paths=int(agg([r.paths for r in rows])),
        functions=int(agg([r.functions for r in rows])),
        clusters=int(agg([r.clusters for r in rows])),
        wall_secs=sum(r.wall_secs for r in rows),
    )


def cmd_compare(args) -> int:
    import os

    name, target, seeds = _resolve_target(args)
    spec = _make_spec(args, name, target)
    all_rows = []
    summary = []
    for policy in POLICIES:
        rows = []
        for rep in range(args.repeat):
            config = _make_config(args, seeds, policy, args.seed + rep)
            out_dir = os.path.join(args.out, f"{policy}-rep{rep}")
            _, row = _run_campaign(args, name, target, spec, config, out_dir)
            rows.append(row)
            all_rows.append(row)
        summary.append(_aggregate(rows, args.aggregate))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(rpt.metrics_csv(all_rows))
    table = rpt.render_metrics_table(summary)
    with open(os.path.join(args.out, "comparison.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def _tree_to_dict(node: TreeNode, columns) -> dict:
    if isinstance(node, Leaf):
        return {"label": node.label, "purity": node.purity,
                "support": node.support}
    threshold = node.threshold
    return {
        "feature": columns[node.feature].name,
        "kind": node.kind,
        "threshold": threshold,
        "left": _tree_to_dict(node.left, columns),
        "right": _tree_to_dict(node.right, columns),
    }


def _predicates_text(space: str, predicates, accuracy: float) -> list[str]:
    lines = [f"# {space} space (training accuracy {accuracy:.3f})"]
    for cluster_idx in sorted(predicates):
        for rule in predicates[cluster_idx]:
            lines.append(f"IF {rule.render()} THEN cluster {cluster_idx} "
                         f"[purity={rule.purity:.2f} support={rule.support}]")
    return lines


def cmd_explain(args) -> int:
    import os

    bundle = rpt.load_bundle(args.run)
    if bundle.external_argv:
        target: object = ExternalTarget(argv=tuple(bundle.external_argv))
        domain = target.domain
    else:
        target = get_target(bundle.target)
        domain = target.domain
    spec = TargetSpec(name=bundle.target, domain=domain,
                      cost_mode=bundle.cost_mode, timeout_secs=args.timeout_secs)
    labels = bundle.cluster_assignment
    if args.k is not None:
        functions = fit_functions(bundle.coverage)
        if not functions:
            raise SystemExit2("bundle has no fitted performance functions")
        grid = bundle.grid or Grid.auto(bundle.coverage.max_size())
        clusters = cluster_at_k(functions, args.k, grid, rng_seed=args.seed)
        labels = clusters.assignment
    if not labels:
        raise SystemExit2("bundle has no cluster labels; re-run with --k")
    spaces = ("input", "internal") if args.space == "both" else (args.space,)
    result = explain(bundle.population, labels, spec, spaces=spaces,
                     tree_config=TreeConfig(max_depth=args.max_depth),
                     target=target)
    doc: dict = {"dpfuzz_schema": rpt.SCHEMA_VERSION, "spaces": {}}
    text_lines: list[str] = []
    if result.input_tree is not None:
        doc["spaces"]["input"] = _tree_to_dict(result.input_tree,
                                               result.input_matrix.columns)
        doc["input_accuracy"] = result.input_accuracy
        text_lines += _predicates_text("input", result.input_predicates,
                                       result.input_accuracy)
    if result.internal_tree is not None:
        doc["spaces"]["internal"] = _tree_to_dict(result.internal_tree,
                                                  result.internal_matrix.columns)
        doc["internal_accuracy"] = result.internal_accuracy
        text_lines += _predicates_text("internal", result.internal_predicates,
                                       result.internal_accuracy)
    with open(os.path.join(args.run, rpt.TREES_JSON), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with open(os.path.join(args.run, rpt.PREDICATES_TXT), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("\n".join(text_lines) + "\n")
    print("\n".join(text_lines))
    return 0


def cmd_report(args) -> int:
    bundle = rpt.load_bundle(args.run)
    row = rpt.regenerate_bundle_outputs(bundle)
    print(rpt.render_metrics_row(row))
    crashes = rpt.crash_summary(bundle.events)
    print(f"iterations={bundle.iterations} crashes={crashes['crash']} "
          f"timeouts={crashes['timeout']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "fuzz": cmd_fuzz,
        "compare": cmd_compare,
        "explain": cmd_explain,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
