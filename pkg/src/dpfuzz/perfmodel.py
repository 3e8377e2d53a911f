"""Per-path performance functions and their functional clustering.

Each explored path owns a set of per-size maximum costs. A path's
performance function is the better of a linear fit ``a*n + b`` and a
power-law fit ``a*n**b`` (log-log least squares), judged by mean absolute
residual on the original scale. Functions are compared by their l1
distance over a shared integer evaluation grid, and grouped by a KMeans
loop that raises k until every within-cluster pair is within the
tolerance ``epsilon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .rng import SplitMix64

KIND_LINEAR = "linear"
KIND_POWER = "power"

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100


class UnmodeledPathError(ValueError):
    """Too few distinct sizes to fit a performance function."""


class FitError(ValueError):
    pass


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Integer evaluation grid lo..hi with a fixed step."""

    lo: int
    hi: int
    step: int = 1

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi < self.lo or self.step < 1:
            raise ValueError("grid needs 0 <= lo <= hi and step >= 1")

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, self.step, dtype=float)

    @staticmethod
    def auto(max_size: int, max_points: int = 512) -> "Grid":
        hi = max(2, int(max_size))
        step = max(1, math.ceil((hi - 1 + 1) / max_points))
        return Grid(1, hi, step)


@dataclass(frozen=True)
class PerfFunction:
    """Fitted cost-versus-size model for one path."""

    path: int
    kind: str
    a: float
    b: float
    n_min: int
    n_max: int
    residual: float
    sample_count: int

    def __call__(self, n: float) -> float:
        if self.kind == KIND_LINEAR:
            return self.a * n + self.b
        return self.a * float(n) ** self.b

    def evaluate(self, grid: Grid) -> np.ndarray:
        pts = grid.points
        if self.kind == KIND_LINEAR:
            return self.a * pts + self.b
        return self.a * np.power(pts, self.b)


def _collapse_max(samples: Iterable[tuple[int, float]]) -> tuple[np.ndarray, np.ndarray]:
    best: dict[int, float] = {}
    for n, c in samples:
        if not (math.isfinite(n) and math.isfinite(c)):
            raise FitError("non-finite sample")
        n = int(n)
        if n not in best or c > best[n]:
            best[n] = float(c)
    ns = np.array(sorted(best), dtype=float)
    cs = np.array([best[int(n)] for n in ns], dtype=float)
    return ns, cs


def _linear_ls(ns: np.ndarray, cs: np.ndarray) -> tuple[float, float]:
    n_mean = ns.mean()
    c_mean = cs.mean()
    denom = float(((ns - n_mean) ** 2).sum())
    a = float(((ns - n_mean) * (cs - c_mean)).sum()) / denom
    return a, float(c_mean - a * n_mean)


def fit_perf_function(path: int, samples: Sequence[tuple[int, float]]) -> PerfFunction:
    """Fit the per-size maxima of one path; pick the lower-residual kind.

    Duplicate sizes collapse to their maximum cost first. The power-law
    fit needs at least 3 distinct sizes with size >= 1 and cost > 0, and
    is discarded when its fitted exponent comes out negative. Ties go to
    the linear kind.
    """
    ns, cs = _collapse_max(samples)
    if len(ns) < 2:
        raise UnmodeledPathError(f"path {path:#x} has {len(ns)} distinct size(s), need 2")
    a_lin, b_lin = _linear_ls(ns, cs)
    res_lin = float(np.abs(a_lin * ns + b_lin - cs).mean())

    mask = (ns >= 1) & (cs > 0)
    power: tuple[float, float, float] | None = None
    if int(mask.sum()) >= 3:
        log_n = np.log(ns[mask])
        log_c = np.log(cs[mask])
        b_pow, log_a = _linear_ls(log_n, log_c)
        if b_pow >= 0:
            a_pow = float(math.exp(log_a))
            res_pow = float(np.abs(a_pow * np.power(ns, b_pow) - cs).mean())
            power = (a_pow, b_pow, res_pow)

    n_min, n_max = int(ns[0]), int(ns[-1])
    if power is not None and power[2] < res_lin:
        a_pow, b_pow, res_pow = power
        return PerfFunction(path, KIND_POWER, a_pow, b_pow, n_min, n_max,
                            res_pow, len(ns))
    return PerfFunction(path, KIND_LINEAR, a_lin, b_lin, n_min, n_max,
                        res_lin, len(ns))


def l1_distance(f: PerfFunction, g: PerfFunction, grid: Grid) -> float:
    """Step-weighted Riemann sum of |f - g| over the grid."""
    return float(np.abs(f.evaluate(grid) - g.evaluate(grid)).sum()) * grid.step


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise l1 distances over a fixed grid."""

    values: np.ndarray
    grid: Grid


def pairwise_distances(functions: Sequence[PerfFunction], grid: Grid) -> DistanceMatrix:
    X = np.stack([f.evaluate(grid) for f in functions])
    diff = np.abs(X[:, None, :] - X[None, :, :]).sum(axis=2) * grid.step
    return DistanceMatrix(values=diff, grid=grid)


@dataclass
class ClusterSet:
    """A partition of paths whose within-cluster function pairs are
    epsilon-close on the grid."""

    k: int
    assignment: dict[int, int]
    centroids: np.ndarray
    grid: Grid
    epsilon: float
    separated_count: int | None = None

    def members(self, cluster: int) -> list[int]:
        return [p for p, c in self.assignment.items() if c == cluster]


def _seed_centers(X: np.ndarray, k: int, rng: SplitMix64, deterministic: bool) -> np.ndarray:
    n = len(X)
    if deterministic:
        first = int(np.abs(X).sum(axis=1).argmax())
    else:
        first = rng.below(n)
    chosen = [first]
    dists = np.abs(X - X[first]).sum(axis=1)
    while len(chosen) < k:
        if deterministic or float(dists.sum()) <= 0:
            nxt = int(dists.argmax())
        else:
            nxt = rng.weighted_index([float(d) + 1e-12 for d in dists])
        chosen.append(nxt)
        dists = np.minimum(dists, np.abs(X - X[nxt]).sum(axis=1))
    return X[chosen].copy()


def _kmeans_l1(X: np.ndarray, k: int, rng: SplitMix64,
               restarts: int = KMEANS_RESTARTS,
               max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd iterations under l1 with coordinate-wise median centroids."""
    n = len(X)
    best_obj = math.inf
    best_labels: np.ndarray | None = None
    for restart in range(restarts):
        centers = _seed_centers(X, k, rng, deterministic=(restart == 0))
        labels = np.full(n, -1)
        for _ in range(max_iter):
            D = np.abs(X[:, None, :] - centers[None, :, :]).sum(axis=2)
            new_labels = D.argmin(axis=1)
            for c in range(k):
                if not (new_labels == c).any():
                    far = int(D[np.arange(n), new_labels].argmax())
                    new_labels[far] = c
                    centers[c] = X[far]
            if (new_labels == labels).all():
                break
            labels = new_labels
            for c in range(k):
                pts = X[labels == c]
                if len(pts):
                    centers[c] = np.median(pts, axis=0)
        obj = float(np.abs(X - centers[labels]).sum())
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_labels = labels.copy()
    assert best_labels is not None
    return best_labels


def _canonical_labels(labels: Sequence[int]) -> list[int]:
    remap: dict[int, int] = {}
    out = []
    for lab in labels:
        if lab not in remap:
            remap[lab] = len(remap)
        out.append(remap[lab])
    return out


def _within_ok(dm: np.ndarray, labels: Sequence[int], eps: float) -> bool:
    labels = np.asarray(labels)
    for c in set(labels.tolist()):
        idx = np.flatnonzero(labels == c)
        if len(idx) > 1 and float(dm[np.ix_(idx, idx)].max()) > eps:
            return False
    return True


def _build_cluster_set(functions: Sequence[PerfFunction], labels: Sequence[int],
                       X: np.ndarray, grid: Grid, eps: float) -> ClusterSet:
    labels = _canonical_labels(labels)
    k = max(labels) + 1
    assignment = {f.path: lab for f, lab in zip(functions, labels)}
    centroids = np.stack([
        X[np.flatnonzero(np.asarray(labels) == c)].mean(axis=0) for c in range(k)
    ])
    return ClusterSet(k=k, assignment=assignment, centroids=centroids,
                      grid=grid, epsilon=eps)


def cluster(functions: Sequence[PerfFunction], epsilon: float, grid: Grid,
            rng_seed: int = 0) -> ClusterSet:
    """Smallest-k KMeans clustering whose clusters are pairwise
    epsilon-close.

    Starts at k=1 and re-runs KMeans with k+1 until every within-cluster
    function pair is within epsilon on the grid; k equal to the number of
    functions (all singletons) always satisfies the condition.
    """
    if not functions:
        raise ClusteringError("no functions to cluster")
    n = len(functions)
    X = np.stack([f.evaluate(grid) for f in functions])
    dm = pairwise_distances(functions, grid).values
    rng = SplitMix64(rng_seed)
    for k in range(1, n):
        labels = _kmeans_l1(X, k, rng.spawn())
        if _within_ok(dm, labels, epsilon):
            return _build_cluster_set(functions, labels, X, grid, epsilon)
    return _build_cluster_set(functions, list(range(n)), X, grid, epsilon)


def cluster_at_k(functions: Sequence[PerfFunction], k: int, grid: Grid,
                 rng_seed: int = 0) -> ClusterSet:
    """KMeans at a fixed k (no epsilon loop), for user-driven re-clustering."""
    if not functions:
        raise ClusteringError("no functions to cluster")
    k = min(max(1, k), len(functions))
    X = np.stack([f.evaluate(grid) for f in functions])
    if k == len(functions):
        labels: Sequence[int] = list(range(len(functions)))
    else:
        labels = _kmeans_l1(X, k, SplitMix64(rng_seed))
    return _build_cluster_set(functions, labels, X, grid, epsilon=math.inf)


def separated_count(clusters: ClusterSet, sigma: float) -> int:
    """Number of clusters whose centroid is more than sigma (l1, grid
    step weighted) away from every other centroid."""
    k = clusters.k
    if k <= 1:
        return k
    C = clusters.centroids
    D = np.abs(C[:, None, :] - C[None, :, :]).sum(axis=2) * clusters.grid.step
    np.fill_diagonal(D, math.inf)
    return int((D.min(axis=1) > sigma).sum())


def elbow_k(functions: Sequence[PerfFunction], error_threshold: float,
            grid: Grid, rng_seed: int = 0) -> int:
    """Smallest k whose total intra-cluster l1 error to the mean centroid
    falls below the threshold (capped at the number of functions)."""
    if not functions:
        raise ClusteringError("no functions for the elbow rule")
    n = len(functions)
    X = np.stack([f.evaluate(grid) for f in functions])
    rng = SplitMix64(rng_seed)
    for k in range(1, n + 1):
        if k == n:
            labels: Sequence[int] = list(range(n))
        else:
            labels = _kmeans_l1(X, k, rng.spawn())
        labels = np.asarray(_canonical_labels(list(labels)))
        err = 0.0
        for c in range(int(labels.max()) + 1):
            pts = X[labels == c]
            err += float(np.abs(pts - pts.mean(axis=0)).sum()) * grid.step
        if err < error_threshold:
            return k
    return n
