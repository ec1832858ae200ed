"""Multi-class random-forest matcher supplying segment posteriors P(c|x).

Standard classification forest: each tree is grown on a bootstrap sample
with Gini-impurity splits over sqrt(dim) randomly chosen channels per node;
leaves keep class-count histograms. The posterior is the average of leaf
class fractions over trees (soft voting), so it always lies on the simplex.

Descriptors for training events must not see a matcher trained on their own
segments, hence the folded variant: events are split into K stratified
folds and matcher k is trained on the segments of every fold but k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingleClass, TooFewEvents


@dataclass(frozen=True)
class MatcherConfig:
    n_trees: int = 200
    max_depth: int = 0          # 0 means unlimited
    min_samples_split: int = 2
    mtry: int = 0               # 0 means round(sqrt(dim))

    def resolve_mtry(self, dim: int) -> int:
        if self.mtry > 0:
            return min(self.mtry, dim)
        return max(1, min(dim, int(round(math.sqrt(dim)))))

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split,
                "mtry": self.mtry}

    @staticmethod
    def from_dict(d: dict) -> "MatcherConfig":
        return MatcherConfig(**d)


@dataclass
class ClassificationTree:
    """Flat node arrays; feature == -1 marks a leaf with a class histogram."""

    feature: np.ndarray    # (nodes,) int32
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray       # (nodes,) int32
    right: np.ndarray      # (nodes,) int32
    leaf_hist: np.ndarray  # (nodes, n_classes) int64

    def leaf_indices(self, x_matrix: np.ndarray) -> np.ndarray:
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

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "leaf_hist": [[int(c) for c in row] for row in self.leaf_hist],
        }

    @staticmethod
    def from_dict(d: dict) -> "ClassificationTree":
        return ClassificationTree(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            leaf_hist=np.asarray(d["leaf_hist"], dtype=np.int64),
        )


def _best_gini_split(x: np.ndarray, y: np.ndarray, channels: np.ndarray,
                     n_classes: int) -> tuple[int, float] | None:
    """Best (channel, threshold) over the sampled channels, or None.

    Maximises sum(count_c^2)/n_left + sum(count_c^2)/n_right, which is
    equivalent to minimising the weighted Gini impurity. Candidate
    thresholds sit between consecutive distinct sorted values.
    """
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    best_score = -np.inf
    best: tuple[int, float] | None = None
    for ch in channels:
        order = np.argsort(x[:, ch], kind="stable")
        xs = x[order, ch]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        cum = np.cumsum(onehot[order], axis=0)  # (n, C)
        n_left = np.arange(1, n + 1, dtype=np.float64)
        left_sq = (cum ** 2).sum(axis=1)
        right_counts = cum[-1] - cum
        right_sq = (right_counts ** 2).sum(axis=1)
        n_right = n - n_left
        with np.errstate(divide="ignore", invalid="ignore"):
            score = left_sq / n_left + right_sq / np.where(n_right > 0,
                                                           n_right, 1.0)
        score = score[:-1]
        score[~distinct] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best_score:
            mid = 0.5 * (xs[i] + xs[i + 1])
            # Guard against midpoints that round onto the upper value.
            thr = mid if xs[i] < mid < xs[i + 1] else float(xs[i])
            best_score = float(score[i])
            best = (int(ch), float(thr))
    return best


def _grow_classification_tree(x: np.ndarray, y: np.ndarray, n_classes: int,
                              cfg: MatcherConfig,
                              rng: np.random.Generator) -> ClassificationTree:
    dim = x.shape[1]
    mtry = cfg.resolve_mtry(dim)
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    hists: list[np.ndarray] = []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hists.append(np.zeros(n_classes, dtype=np.int64))
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = add_node()
        counts = np.bincount(y[idx], minlength=n_classes)
        pure = np.count_nonzero(counts) <= 1
        depth_capped = cfg.max_depth > 0 and depth >= cfg.max_depth
        if pure or depth_capped or len(idx) < cfg.min_samples_split:
            hists[node] = counts.astype(np.int64)
            return node
        channels = rng.choice(dim, size=mtry, replace=False)
        split = _best_gini_split(x[idx], y[idx], channels, n_classes)
        if split is None:
            hists[node] = counts.astype(np.int64)
            return node
        ch, thr = split
        feature[node] = ch
        threshold[node] = thr
        goes_right = x[idx, ch] > thr
        left[node] = build(idx[~goes_right], depth + 1)
        right[node] = build(idx[goes_right], depth + 1)
        return node

    build(np.arange(len(x)), 0)
    return ClassificationTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_hist=np.vstack(hists).astype(np.int64),
    )


@dataclass
class MatcherModel:
    trees: list[ClassificationTree]
    classes: list[int]
    config: MatcherConfig
    seed: tuple[int, ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_index(self, class_id: int) -> int:
        return self.classes.index(class_id)

    def posterior_matrix(self, x_matrix: np.ndarray) -> np.ndarray:
        """P(c|x) for every row, shape (n_rows, n_classes)."""
        x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
        post = np.zeros((len(x_matrix), self.n_classes))
        for tree in self.trees:
            leaves = tree.leaf_indices(x_matrix)
            hist = tree.leaf_hist[leaves].astype(np.float64)
            post += hist / hist.sum(axis=1, keepdims=True)
        return post / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "classes": [int(c) for c in self.classes],
            "seed": [int(s) for s in self.seed],
            "config": self.config.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @staticmethod
    def from_dict(d: dict) -> "MatcherModel":
        return MatcherModel(
            trees=[ClassificationTree.from_dict(t) for t in d["trees"]],
            classes=[int(c) for c in d["classes"]],
            config=MatcherConfig.from_dict(d["config"]),
            seed=tuple(int(s) for s in d["seed"]),
        )


def train_matcher(x: np.ndarray, y: np.ndarray, cfg: MatcherConfig,
                  seed, workers: int = 1) -> MatcherModel:
    """Classification forest on labeled segments.

    ``seed`` may be an int or a tuple; tree t uses the stream
    (seed..., t), keeping training deterministic and order-independent.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    classes = sorted(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise SingleClass("matcher needs at least two classes")
    remap = {c: i for i, c in enumerate(classes)}
    y_idx = np.asarray([remap[int(v)] for v in y], dtype=np.int64)
    seed_t = (seed,) if isinstance(seed, int) else tuple(seed)
    n = len(x)

    def build_one(t: int) -> ClassificationTree:
        rng = np.random.default_rng([*seed_t, t])
        idx = rng.integers(0, n, size=n)
        return _grow_classification_tree(x[idx], y_idx[idx], len(classes),
                                         cfg, rng)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(build_one, range(cfg.n_trees)))
    else:
        trees = [build_one(t) for t in range(cfg.n_trees)]
    return MatcherModel(trees=trees, classes=classes, config=cfg, seed=seed_t)


def posterior(model: MatcherModel, x: np.ndarray) -> np.ndarray:
    """Posterior vector over the model's classes for one segment."""
    return model.posterior_matrix(np.asarray(x)[None, :])[0]


def assign_folds(labels: list[int], k: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Stratified fold id per event: shuffle within class, deal round-robin."""
    labels_arr = np.asarray(labels)
    folds = np.empty(len(labels_arr), dtype=np.int64)
    for c in np.unique(labels_arr):
        members = np.nonzero(labels_arr == c)[0]
        members = members[rng.permutation(len(members))]
        folds[members] = np.arange(len(members)) % k
    return folds


@dataclass
class FoldedMatchers:
    matchers: list[MatcherModel]
    fold_of_event: np.ndarray  # (n_events,) int

    @property
    def k(self) -> int:
        return len(self.matchers)

    def matcher_for_event(self, event_index: int) -> MatcherModel:
        """The matcher trained without this event's segments."""
        return self.matchers[int(self.fold_of_event[event_index])]

    def to_dict(self) -> dict:
        return {
            "fold_of_event": [int(f) for f in self.fold_of_event],
            "matchers": [m.to_dict() for m in self.matchers],
        }

    @staticmethod
    def from_dict(d: dict) -> "FoldedMatchers":
        return FoldedMatchers(
            matchers=[MatcherModel.from_dict(m) for m in d["matchers"]],
            fold_of_event=np.asarray(d["fold_of_event"], dtype=np.int64),
        )


def train_folded_matchers(event_features: list[np.ndarray],
                          event_labels: list[int], k: int,
                          cfg: MatcherConfig, seed,
                          workers: int = 1) -> FoldedMatchers:
    """K matchers, each trained on the segments of every fold but its own."""
    n_events = len(event_features)
    if n_events < k:
        raise TooFewEvents(f"{n_events} events cannot fill {k} folds")
    seed_t = (seed,) if isinstance(seed, int) else tuple(seed)
    rng = np.random.default_rng([*seed_t, 0])
    folds = assign_folds(event_labels, k, rng)
    matchers = []
    for fold in range(k):
        keep = [i for i in range(n_events) if folds[i] != fold]
        x = np.vstack([event_features[i] for i in keep])
        y = np.concatenate([
            np.full(len(event_features[i]), event_labels[i], dtype=np.int64)
            for i in keep
        ])
        matchers.append(train_matcher(x, y, cfg, (*seed_t, fold + 1),
                                      workers=workers))
    return FoldedMatchers(matchers=matchers, fold_of_event=folds)
