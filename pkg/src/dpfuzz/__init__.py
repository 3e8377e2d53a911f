"""Differential performance fuzzing toolkit.

Discovers classes of inputs with widely different cost growth in a target
program, models each class as a performance function of input size,
clusters those functions during fuzzing, and explains inter-class
differences with decision trees over input parameters and internal trace
counts.
"""

from .harness import (
    COST_LINES,
    COST_TIME,
    EMPTY_PATH_ID,
    ExecutionRecord,
    STATUS_CRASH,
    STATUS_OK,
    STATUS_TIMEOUT,
    TargetSpec,
    Tracer,
    path_id,
    run_instrumented,
)
from .inputs import (
    ByteDomain,
    CategoricalParam,
    InputDomainError,
    IntParam,
    RealParam,
    RecordDomain,
    TargetInput,
    input_size,
)
from .fuzzing import (
    CoverageMap,
    FuzzConfig,
    FuzzResult,
    PopulationMap,
    admit,
    crossover,
    fuzz,
    mutate,
    select,
)
from .perfmodel import (
    ClusterSet,
    DistanceMatrix,
    Grid,
    PerfFunction,
    UnmodeledPathError,
    cluster,
    cluster_at_k,
    elbow_k,
    fit_perf_function,
    l1_distance,
    pairwise_distances,
    separated_count,
)
from .explain import (
    FeatureMatrix,
    TreeConfig,
    explain,
    extract_internal_features,
    extract_param_features,
    learn_tree,
    tree_predicates,
)
from .report import MetricsRow, compute_metrics, emit_plot
from .rng import SplitMix64
from .targets import BENCHMARK_NAMES, BUILTIN_TARGETS, get_target, target_names
from .tracefmt import (
    ExternalTarget,
    TraceFormatError,
    TraceFragment,
    format_trace,
    parse_external_trace,
)

__version__ = "0.1.0"
