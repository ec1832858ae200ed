"""Class-specific random regression forests for onset/offset distances.

Each training segment carries a pair of distances d = [d+, d-]: the number
of segments back to the event's first segment and forward to its last one.
Trees split on single-channel threshold tests chosen from a random pool to
minimise the summed squared deviation of d on both sides, and leaves store
Gaussian models (mean, variance) of d+ and d- separately.

At estimation time a segment at index n' routed to a leaf contributes the
leaf Gaussian shifted to n' - mean(d+) for the onset and n' + mean(d-) for
the offset; the forest output is the average over trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyClass, EmptySide, NoValidSplit

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# Chunk size for vectorised pool evaluation; bounds peak memory at the root.
_POOL_CHUNK = 2048


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 10
    tests_per_node: int = 20000
    max_depth: int = 12
    min_samples: int = 20
    subsample: float = 0.5
    var_floor: float = 1.0

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "tests_per_node": self.tests_per_node,
            "max_depth": self.max_depth,
            "min_samples": self.min_samples,
            "subsample": self.subsample,
            "var_floor": self.var_floor,
        }

    @staticmethod
    def from_dict(d: dict) -> "ForestConfig":
        return ForestConfig(**d)


@dataclass(frozen=True)
class SplitTest:
    channel: int
    threshold: float


@dataclass(frozen=True)
class LeafModel:
    mean_on: float
    var_on: float
    mean_off: float
    var_off: float
    count: int


@dataclass(frozen=True)
class TestPool:
    """Pool of candidate split tests as parallel arrays."""

    channels: np.ndarray   # (P,) int
    thresholds: np.ndarray  # (P,) float

    def __len__(self) -> int:
        return len(self.channels)

    def __getitem__(self, i: int) -> SplitTest:
        return SplitTest(int(self.channels[i]), float(self.thresholds[i]))


@dataclass
class TrainingSet:
    """Segments of one class as parallel arrays.

    d[:, 0] is the distance to the event onset, d[:, 1] to the offset,
    both in segment-index units.
    """

    x: np.ndarray  # (n, dim)
    d: np.ndarray  # (n, 2)
    class_label: object = None

    def __len__(self) -> int:
        return len(self.x)


def build_regression_training_set(events: list[np.ndarray],
                                  class_label=None) -> TrainingSet:
    """One training segment per event segment.

    ``events`` holds per-event feature matrices (n_segments, dim); segment i
    of an event of N segments gets d = [i, N - 1 - i].
    """
    if not events:
        raise EmptyClass("no events for this class")
    xs, ds = [], []
    for feats in events:
        feats = np.asarray(feats, dtype=np.float64)
        n = len(feats)
        if n == 0:
            raise EmptyClass("event with zero segments")
        idx = np.arange(n, dtype=np.float64)
        xs.append(feats)
        ds.append(np.column_stack([idx, n - 1 - idx]))
    return TrainingSet(np.vstack(xs), np.vstack(ds), class_label)


def sample_test_pool(rng: np.random.Generator, x: np.ndarray,
                     n_tests: int) -> TestPool:
    """Random channels with thresholds uniform in that channel's data range."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("node data must be non-empty")
    channels = rng.integers(0, x.shape[1], size=n_tests)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    thresholds = lo[channels] + rng.random(n_tests) * (hi - lo)[channels]
    return TestPool(channels, thresholds)


def apply_test(t: SplitTest, x: np.ndarray) -> int:
    """1 iff x[channel] > threshold (strict)."""
    return int(x[t.channel] > t.threshold)


def split_cost(left_d: np.ndarray, right_d: np.ndarray) -> float:
    """Summed squared deviation of the distance vectors on both sides."""
    left_d = np.atleast_2d(np.asarray(left_d, dtype=np.float64))
    right_d = np.atleast_2d(np.asarray(right_d, dtype=np.float64))
    if left_d.size == 0 or right_d.size == 0:
        raise EmptySide("both sides of a split must be non-empty")
    cost = 0.0
    for side in (left_d, right_d):
        cost += float(((side - side.mean(axis=0)) ** 2).sum())
    return cost


def select_best_test(pool: TestPool, x: np.ndarray,
                     d: np.ndarray) -> SplitTest:
    """Pool test with minimal split cost among those with two non-empty sides.

    Ties are broken by the lowest pool index. Raises NoValidSplit when every
    test leaves one side empty.
    """
    if len(pool) == 0:
        raise ValueError("pool must be non-empty")
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    n = len(x)
    d_sq = (d ** 2).sum(axis=1)
    total_d = d.sum(axis=0)
    total_sq = d_sq.sum()

    best_cost = np.inf
    best_index = -1
    for start in range(0, len(pool), _POOL_CHUNK):
        ch = pool.channels[start:start + _POOL_CHUNK]
        th = pool.thresholds[start:start + _POOL_CHUNK]
        go_right = (x[:, ch] > th).astype(np.float64)  # (n, chunk)
        n_right = go_right.sum(axis=0)
        n_left = n - n_right
        valid = (n_right > 0) & (n_left > 0)
        if not valid.any():
            continue
        sum_right = go_right.T @ d           # (chunk, 2)
        sumsq_right = go_right.T @ d_sq      # (chunk,)
        sum_left = total_d - sum_right
        sumsq_left = total_sq - sumsq_right
        with np.errstate(divide="ignore", invalid="ignore"):
            cost = (sumsq_left - (sum_left ** 2).sum(axis=1) / n_left) \
                + (sumsq_right - (sum_right ** 2).sum(axis=1) / n_right)
        cost[~valid] = np.inf
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best_index = start + i
    if best_index < 0:
        raise NoValidSplit("every pool test leaves one side empty")
    return pool[best_index]


def fit_leaf(d: np.ndarray, var_floor: float = 1.0) -> LeafModel:
    """Gaussian leaf statistics: means and floored population variances."""
    d = np.atleast_2d(np.asarray(d, dtype=np.float64))
    if d.size == 0:
        raise ValueError("leaf data must be non-empty")
    means = d.mean(axis=0)
    variances = np.maximum(d.var(axis=0), var_floor)
    return LeafModel(float(means[0]), float(variances[0]),
                     float(means[1]), float(variances[1]), len(d))


@dataclass
class RegressionTree:
    """Binary tree as flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray     # (nodes,) int32
    threshold: np.ndarray   # (nodes,) float64
    left: np.ndarray        # (nodes,) int32
    right: np.ndarray       # (nodes,) int32
    leaf_mean_on: np.ndarray
    leaf_var_on: np.ndarray
    leaf_mean_off: np.ndarray
    leaf_var_off: np.ndarray
    leaf_count: np.ndarray  # (nodes,) int32

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_indices(self, x_matrix: np.ndarray) -> np.ndarray:
        """Node index of the leaf each row lands in."""
        x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
        cur = np.zeros(len(x_matrix), dtype=np.int64)
        active = self.feature[cur] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            nodes = cur[rows]
            goes_right = x_matrix[rows, self.feature[nodes]] \
                > self.threshold[nodes]
            cur[rows] = np.where(goes_right, self.right[nodes],
                                 self.left[nodes])
            active = self.feature[cur] >= 0
        return cur

    def leaf_model(self, node: int) -> LeafModel:
        return LeafModel(
            float(self.leaf_mean_on[node]), float(self.leaf_var_on[node]),
            float(self.leaf_mean_off[node]), float(self.leaf_var_off[node]),
            int(self.leaf_count[node]),
        )

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "leaf_mean_on": [float(v) for v in self.leaf_mean_on],
            "leaf_var_on": [float(v) for v in self.leaf_var_on],
            "leaf_mean_off": [float(v) for v in self.leaf_mean_off],
            "leaf_var_off": [float(v) for v in self.leaf_var_off],
            "leaf_count": [int(v) for v in self.leaf_count],
        }

    @staticmethod
    def from_dict(d: dict) -> "RegressionTree":
        return RegressionTree(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            leaf_mean_on=np.asarray(d["leaf_mean_on"], dtype=np.float64),
            leaf_var_on=np.asarray(d["leaf_var_on"], dtype=np.float64),
            leaf_mean_off=np.asarray(d["leaf_mean_off"], dtype=np.float64),
            leaf_var_off=np.asarray(d["leaf_var_off"], dtype=np.float64),
            leaf_count=np.asarray(d["leaf_count"], dtype=np.int32),
        )


class _TreeBuilder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaves: list[tuple[int, LeafModel]] = []

    def add_internal(self, test: SplitTest) -> int:
        i = len(self.feature)
        self.feature.append(test.channel)
        self.threshold.append(test.threshold)
        self.left.append(-1)
        self.right.append(-1)
        return i

    def add_leaf(self, model: LeafModel) -> int:
        i = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaves.append((i, model))
        return i

    def finish(self) -> RegressionTree:
        n = len(self.feature)
        mean_on = np.zeros(n)
        var_on = np.ones(n)
        mean_off = np.zeros(n)
        var_off = np.ones(n)
        count = np.zeros(n, dtype=np.int32)
        for i, leaf in self.leaves:
            mean_on[i] = leaf.mean_on
            var_on[i] = leaf.var_on
            mean_off[i] = leaf.mean_off
            var_off[i] = leaf.var_off
            count[i] = leaf.count
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            leaf_mean_on=mean_on, leaf_var_on=var_on,
            leaf_mean_off=mean_off, leaf_var_off=var_off,
            leaf_count=count,
        )


def grow_tree(x: np.ndarray, d: np.ndarray, cfg: ForestConfig,
              rng: np.random.Generator) -> RegressionTree:
    """Recursively grow one tree on (x, d).

    A node closes as a leaf at depth max_depth, when no more than
    min_samples segments remain, or when no pool test yields a valid split.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if len(x) == 0:
        raise EmptyClass("cannot grow a tree on zero segments")
    builder = _TreeBuilder()

    def build(idx: np.ndarray, depth: int) -> int:
        if depth >= cfg.max_depth or len(idx) <= cfg.min_samples:
            return builder.add_leaf(fit_leaf(d[idx], cfg.var_floor))
        pool = sample_test_pool(rng, x[idx], cfg.tests_per_node)
        try:
            test = select_best_test(pool, x[idx], d[idx])
        except NoValidSplit:
            return builder.add_leaf(fit_leaf(d[idx], cfg.var_floor))
        node = builder.add_internal(test)
        goes_right = x[idx, test.channel] > test.threshold
        builder.left[node] = build(idx[~goes_right], depth + 1)
        builder.right[node] = build(idx[goes_right], depth + 1)
        return node

    build(np.arange(len(x)), 0)
    return builder.finish()


@dataclass
class RegressorForest:
    trees: list[RegressionTree]
    class_id: int
    config: ForestConfig
    seed: tuple[int, ...]
    subsample_indices: list[np.ndarray] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def leaf_params(self, x_matrix: np.ndarray) -> tuple[np.ndarray, ...]:
        """Per-tree leaf Gaussians for each row of ``x_matrix``.

        Returns four (n_trees, n_rows) arrays: mean_on, var_on, mean_off,
        var_off.
        """
        x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
        t, n = self.n_trees, len(x_matrix)
        mean_on = np.empty((t, n))
        var_on = np.empty((t, n))
        mean_off = np.empty((t, n))
        var_off = np.empty((t, n))
        for i, tree in enumerate(self.trees):
            leaves = tree.leaf_indices(x_matrix)
            mean_on[i] = tree.leaf_mean_on[leaves]
            var_on[i] = tree.leaf_var_on[leaves]
            mean_off[i] = tree.leaf_mean_off[leaves]
            var_off[i] = tree.leaf_var_off[leaves]
        return mean_on, var_on, mean_off, var_off

    def to_dict(self) -> dict:
        return {
            "class_id": int(self.class_id),
            "seed": [int(s) for s in self.seed],
            "config": self.config.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "RegressorForest":
        return RegressorForest(
            trees=[RegressionTree.from_dict(t) for t in d["trees"]],
            class_id=int(d["class_id"]),
            config=ForestConfig.from_dict(d["config"]),
            seed=tuple(int(s) for s in d["seed"]),
        )


def subsample_size(n: int, fraction: float) -> int:
    """Rounded fraction of n, at least 1 and at most n."""
    return max(1, min(n, int(math.floor(fraction * n + 0.5))))


def train_forest(events: list[np.ndarray], cfg: ForestConfig, seed,
                 class_id: int = 0, workers: int = 1) -> RegressorForest:
    """Train n_trees trees, each on an independent subsample of the segments.

    ``seed`` may be an int or a tuple; tree t draws its subsample and all
    node tests from an RNG stream keyed on (seed..., t), so the result is
    independent of execution order.
    """
    ts = build_regression_training_set(events, class_id)
    n = len(ts)
    seed_t = (seed,) if isinstance(seed, int) else tuple(seed)

    def build_one(t: int) -> tuple[RegressionTree, np.ndarray]:
        rng = np.random.default_rng([*seed_t, t])
        idx = rng.choice(n, size=subsample_size(n, cfg.subsample),
                         replace=False)
        return grow_tree(ts.x[idx], ts.d[idx], cfg, rng), idx

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build_one, range(cfg.n_trees)))
    else:
        results = [build_one(t) for t in range(cfg.n_trees)]

    forest = RegressorForest(trees=[r[0] for r in results], class_id=class_id,
                             config=cfg, seed=seed_t,
                             subsample_indices=[r[1] for r in results])
    return forest


def route(tree: RegressionTree, x: np.ndarray) -> LeafModel:
    """Leaf reached by applying the stored tests (1 -> right, 0 -> left)."""
    x = np.asarray(x, dtype=np.float64)
    node = 0
    while tree.feature[node] >= 0:
        test = SplitTest(int(tree.feature[node]), float(tree.threshold[node]))
        node = int(tree.right[node]) if apply_test(test, x) \
            else int(tree.left[node])
    return tree.leaf_model(node)


def gaussian_pdf(grid: np.ndarray, mean, var) -> np.ndarray:
    """Univariate normal density evaluated at the grid points."""
    grid = np.asarray(grid, dtype=np.float64)
    return np.exp(-0.5 * (grid - mean) ** 2 / var) / (SQRT_TWO_PI * np.sqrt(var))


def forest_estimate(forest: RegressorForest, x: np.ndarray, n_prime: int,
                    grid_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Onset/offset densities over the integer grid [0, grid_len).

    The onset density shifts each tree's leaf Gaussian to n' - mean(d+),
    the offset density to n' + mean(d-); both average over trees.
    """
    grid = np.arange(grid_len, dtype=np.float64)
    p_plus = np.zeros(grid_len)
    p_minus = np.zeros(grid_len)
    for tree in forest.trees:
        leaf = route(tree, x)
        p_plus += gaussian_pdf(grid, n_prime - leaf.mean_on, leaf.var_on)
        p_minus += gaussian_pdf(grid, n_prime + leaf.mean_off, leaf.var_off)
    t = forest.n_trees
    return p_plus / t, p_minus / t
