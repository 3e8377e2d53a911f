"""Discriminant learning over input parameters and internal trace counts.

Cluster labels from the performance clustering become classification
targets for two CART trees: tree 1 over input-parameter features and
tree 2 over internal features (per-site hit counts gathered by
re-executing the population under instrumentation). Root-to-leaf paths
are rendered as human-readable predicates per cluster.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence, Union

from .harness import ExecutionRecord, STATUS_OK, TargetSpec, run_instrumented
from .inputs import TargetInput

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"

#: Leading payload bytes exposed as features for byte inputs.
LEAD_BYTES = 4

#: Gains closer than this are ties, broken toward the earlier candidate.
GAIN_TIE_TOL = 1e-12


class FeatureError(ValueError):
    pass


class ExplainError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    kind: str  # numeric | categorical


@dataclass
class FeatureMatrix:
    """Rectangular value table plus per-row provenance."""

    columns: list[FeatureColumn]
    rows: list[list[Any]]
    provenance: list[Any] = field(default_factory=list)

    def __post_init__(self) -> None:
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise FeatureError("ragged feature matrix")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_values(self, idx: int) -> list[Any]:
        return [row[idx] for row in self.rows]


def _byte_feature_row(x: TargetInput) -> list[Any]:
    data = x.data or b""
    row: list[Any] = []
    for i in range(LEAD_BYTES):
        if i < len(data):
            row.extend([data[i], data[i] & 1])
        else:
            row.extend([-1, -1])
    row.append(len(data))
    return row


def _byte_feature_columns() -> list[FeatureColumn]:
    cols: list[FeatureColumn] = []
    for i in range(LEAD_BYTES):
        cols.append(FeatureColumn(f"byte{i}", NUMERIC))
        cols.append(FeatureColumn(f"byte{i}_parity", NUMERIC))
    cols.append(FeatureColumn("size", NUMERIC))
    return cols


def features_for_inputs(inputs: Sequence[TargetInput],
                        size_field: str = "size") -> FeatureMatrix:
    """Parameter features: one row per input, one column per declared
    parameter plus size; byte payloads expose size and leading bytes
    (with their parities)."""
    if not inputs:
        raise FeatureError("empty population")
    kinds = {x.is_bytes for x in inputs}
    if len(kinds) > 1:
        raise FeatureError("mixed byte and record payloads")
    if inputs[0].is_bytes:
        return FeatureMatrix(
            columns=_byte_feature_columns(),
            rows=[_byte_feature_row(x) for x in inputs],
            provenance=list(inputs),
        )
    names = list(inputs[0].params.keys())
    for x in inputs:
        if list(x.params.keys()) != names:
            raise FeatureError("records with differing parameter sets")
    columns = []
    for name in names:
        v = inputs[0].params[name]
        kind = CATEGORICAL if isinstance(v, str) else NUMERIC
        columns.append(FeatureColumn(name, kind))
    columns.append(FeatureColumn("size", NUMERIC))
    rows = []
    from .inputs import input_size

    for x in inputs:
        row = [x.params[name] for name in names]
        row.append(input_size(x, size_field))
        rows.append(row)
    return FeatureMatrix(columns=columns, rows=rows, provenance=list(inputs))


def extract_param_features(pop, size_field: str = "size") -> FeatureMatrix:
    """Parameter features for every input of a PopulationMap, in map order."""
    inputs = [x for _, xs in pop.items() for x in xs]
    return features_for_inputs(inputs, size_field)


def extract_internal_features(records: Sequence[ExecutionRecord]) -> FeatureMatrix:
    """One numeric column per count name seen in any ok record; missing
    counts are zero (an uninvoked site has zero calls)."""
    if not records:
        raise FeatureError("no execution records")
    kept = []
    for r in records:
        if r.status == STATUS_OK:
            kept.append(r)
        else:
            log.info("dropping %s record from internal features", r.status)
    if not kept:
        raise FeatureError("no ok records to extract features from")
    names = sorted({name for r in kept for name in r.internal_counts})
    columns = [FeatureColumn(name, NUMERIC) for name in names]
    rows = [[r.internal_counts.get(name, 0) for name in names] for r in kept]
    return FeatureMatrix(columns=columns, rows=rows, provenance=kept)


# ---------------------------------------------------------------------------
# CART

@dataclass(frozen=True)
class Leaf:
    label: int
    purity: float
    support: int


@dataclass(frozen=True)
class Split:
    feature: int
    kind: str          # numeric | categorical
    threshold: Any     # numeric bound or category value
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 5
    min_split: int = 2  # nodes smaller than this become leaves


def _gini(labels: Sequence[int]) -> float:
    n = len(labels)
    if n == 0:
        return 0.0
    counts: dict[int, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    return 1.0 - sum((c / n) ** 2 for c in counts.values())


def _majority(labels: Sequence[int]) -> tuple[int, float]:
    counts: dict[int, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    label = min(counts, key=lambda lab: (-counts[lab], lab))
    return label, counts[label] / len(labels)


def _split_candidates(matrix: FeatureMatrix, rows: Sequence[int], feature: int):
    col = matrix.columns[feature]
    values = [matrix.rows[i][feature] for i in rows]
    if col.kind == NUMERIC:
        uniq = sorted(set(values))
        for lo, hi in zip(uniq, uniq[1:]):
            yield (lo + hi) / 2
    else:
        for v in sorted(set(values), key=str):
            yield v


def _goes_left(value: Any, kind: str, threshold: Any) -> bool:
    if kind == NUMERIC:
        return value <= threshold
    return value == threshold


def best_split(matrix: FeatureMatrix, labels: Sequence[int],
               rows: Sequence[int]) -> tuple[int, str, Any] | None:
    """Exhaustive Gini-gain maximization over every candidate predicate.

    Ties (within GAIN_TIE_TOL) keep the earlier candidate: features in
    column order, numeric thresholds ascending, categories in sorted
    order. Zero-gain splits are allowed; they still shrink both sides.
    """
    parent = _gini([labels[i] for i in rows])
    n = len(rows)
    best: tuple[float, int, str, Any] | None = None
    for f, col in enumerate(matrix.columns):
        for threshold in _split_candidates(matrix, rows, f):
            left_labels = []
            right_labels = []
            for i in rows:
                if _goes_left(matrix.rows[i][f], col.kind, threshold):
                    left_labels.append(labels[i])
                else:
                    right_labels.append(labels[i])
            if not left_labels or not right_labels:
                continue
            w = len(left_labels) / n
            gain = parent - (w * _gini(left_labels) + (1 - w) * _gini(right_labels))
            if best is None or gain > best[0] + GAIN_TIE_TOL:
                best = (gain, f, col.kind, threshold)
    if best is None:
        return None
    return best[1], best[2], best[3]


def _grow(matrix: FeatureMatrix, labels: Sequence[int], rows: list[int],
          depth: int, config: TreeConfig) -> TreeNode:
    label, purity = _majority([labels[i] for i in rows])
    node_labels = {labels[i] for i in rows}
    if len(node_labels) == 1 or depth >= config.max_depth or len(rows) < config.min_split:
        return Leaf(label, purity, len(rows))
    found = best_split(matrix, labels, rows)
    if found is None:
        return Leaf(label, purity, len(rows))
    f, kind, threshold = found
    left_rows = [i for i in rows if _goes_left(matrix.rows[i][f], kind, threshold)]
    right_rows = [i for i in rows if not _goes_left(matrix.rows[i][f], kind, threshold)]
    return Split(
        feature=f,
        kind=kind,
        threshold=threshold,
        left=_grow(matrix, labels, left_rows, depth + 1, config),
        right=_grow(matrix, labels, right_rows, depth + 1, config),
    )


def learn_tree(matrix: FeatureMatrix, labels: Sequence[int],
               config: TreeConfig | None = None) -> TreeNode:
    """Greedy binary CART minimizing Gini impurity."""
    if matrix.n_rows == 0:
        raise FeatureError("cannot learn from zero rows")
    if matrix.n_rows != len(labels):
        raise FeatureError("labels do not match rows")
    config = config or TreeConfig()
    return _grow(matrix, list(labels), list(range(matrix.n_rows)), 0, config)


def predict(tree: TreeNode, row: Sequence[Any]) -> int:
    node = tree
    while isinstance(node, Split):
        node = node.left if _goes_left(row[node.feature], node.kind,
                                       node.threshold) else node.right
    return node.label


def training_accuracy(tree: TreeNode, matrix: FeatureMatrix,
                      labels: Sequence[int]) -> float:
    hits = sum(1 for row, lab in zip(matrix.rows, labels)
               if predict(tree, row) == lab)
    return hits / len(labels)


# ---------------------------------------------------------------------------
# predicates

@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str  # "<=", ">", "==", "!="
    value: Any

    def render(self) -> str:
        value = f"{self.value!r}" if isinstance(self.value, str) else f"{self.value}"
        return f"{self.feature} {self.op} {value}"


@dataclass(frozen=True)
class LeafRule:
    conjunction: tuple[Predicate, ...]
    purity: float
    support: int

    def render(self) -> str:
        if not self.conjunction:
            return "true"
        return " and ".join(p.render() for p in self.conjunction)


def tree_predicates(tree: TreeNode, matrix: FeatureMatrix) -> dict[int, list[LeafRule]]:
    """Per cluster, the disjunction of root-to-leaf conjunctions."""
    out: dict[int, list[LeafRule]] = {}

    def walk(node: TreeNode, trail: tuple[Predicate, ...]) -> None:
        if isinstance(node, Leaf):
            out.setdefault(node.label, []).append(
                LeafRule(trail, node.purity, node.support))
            return
        name = matrix.columns[node.feature].name
        if node.kind == NUMERIC:
            left_p = Predicate(name, "<=", node.threshold)
            right_p = Predicate(name, ">", node.threshold)
        else:
            left_p = Predicate(name, "==", node.threshold)
            right_p = Predicate(name, "!=", node.threshold)
        walk(node.left, trail + (left_p,))
        walk(node.right, trail + (right_p,))

    walk(tree, ())
    return out


# ---------------------------------------------------------------------------
# end-to-end explanation

@dataclass
class Explanation:
    input_tree: TreeNode | None = None
    input_matrix: FeatureMatrix | None = None
    input_accuracy: float | None = None
    input_predicates: dict[int, list[LeafRule]] | None = None
    internal_tree: TreeNode | None = None
    internal_matrix: FeatureMatrix | None = None
    internal_accuracy: float | None = None
    internal_predicates: dict[int, list[LeafRule]] | None = None
    n_rows: int = 0
    failed_runs: int = 0


def explain(pop, labels: Mapping[int, int], spec: TargetSpec,
            spaces: Sequence[str] = ("input", "internal"),
            tree_config: TreeConfig | None = None,
            target=None) -> Explanation:
    """Learn the input-space and internal-space discriminant trees.

    ``labels`` maps each path to its cluster; every input of a labeled
    path becomes one training row. The internal tree re-executes those
    inputs under instrumentation; more than half of them failing is an
    error.
    """
    inputs: list[TargetInput] = []
    row_labels: list[int] = []
    for path, xs in pop.items():
        if path not in labels:
            continue
        for x in xs:
            inputs.append(x)
            row_labels.append(labels[path])
    if not inputs:
        raise ExplainError("no labeled inputs to explain")

    result = Explanation(n_rows=len(inputs))
    if "input" in spaces:
        matrix = features_for_inputs(inputs, spec.size_field)
        tree = learn_tree(matrix, row_labels, tree_config)
        result.input_tree = tree
        result.input_matrix = matrix
        result.input_accuracy = training_accuracy(tree, matrix, row_labels)
        result.input_predicates = tree_predicates(tree, matrix)
    if "internal" in spaces:
        records: list[ExecutionRecord] = []
        kept_labels: list[int] = []
        failed = 0
        for x, lab in zip(inputs, row_labels):
            record = run_instrumented(spec, x, target=target)
            if record.status == STATUS_OK:
                records.append(record)
                kept_labels.append(lab)
            else:
                failed += 1
        result.failed_runs = failed
        if failed * 2 > len(inputs):
            raise ExplainError(
                f"instrumented re-execution failed for {failed}/{len(inputs)} inputs")
        matrix = extract_internal_features(records)
        tree = learn_tree(matrix, kept_labels, tree_config)
        result.internal_tree = tree
        result.internal_matrix = matrix
        result.internal_accuracy = training_accuracy(tree, matrix, kept_labels)
        result.internal_predicates = tree_predicates(tree, matrix)
    return result
