"""Bag-of-words baselines over k-means codebooks, plus max voting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEvent, TooFewPoints


@dataclass
class Codebook:
    centroids: np.ndarray  # (V, dim)
    inertia_path: list[float] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.centroids)

    def to_dict(self) -> dict:
        return {"centroids": [[float(v) for v in row]
                              for row in self.centroids]}

    @staticmethod
    def from_dict(d: dict) -> "Codebook":
        return Codebook(np.asarray(d["centroids"], dtype=np.float64))


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    sq = ((points ** 2).sum(axis=1)[:, None]
          + (centroids ** 2).sum(axis=1)[None, :]
          - 2.0 * points @ centroids.T)
    return np.maximum(sq, 0.0)


def assign_nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the closest centroid per point; ties go to the lowest index."""
    return np.argmin(_sq_distances(points, centroids), axis=1)


def kmeans(points: np.ndarray, k: int, seed: int = 0,
           max_iters: int = 100) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until the assignment reaches a fixpoint or max_iters; a cluster
    that empties is re-seeded at the point farthest from its own centroid.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(np.unique(points, axis=0)) < k:
        raise TooFewPoints(f"need at least {k} distinct points")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(len(points))]
    closest = _sq_distances(points, centroids[:1]).ravel()
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
            centroids[j] = points[rng.choice(len(points), p=probs)]
        else:
            centroids[j] = points[rng.integers(len(points))]
        closest = np.minimum(closest,
                             _sq_distances(points, centroids[j:j + 1]).ravel())

    inertia_path: list[float] = []
    assignment = None
    for _ in range(max_iters):
        d = _sq_distances(points, centroids)
        new_assignment = np.argmin(d, axis=1)
        inertia_path.append(float(d[np.arange(len(points)),
                                    new_assignment].sum()))
        if assignment is not None and np.array_equal(assignment,
                                                     new_assignment):
            break
        assignment = new_assignment
        nearest_d = d[np.arange(len(points)), assignment]
        for j in range(k):
            members = assignment == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(nearest_d))
                centroids[j] = points[far]
                nearest_d = nearest_d.copy()
                nearest_d[far] = 0.0
    return Codebook(centroids=centroids, inertia_path=inertia_path)


def bow_encode(segments: np.ndarray, codebook: Codebook) -> np.ndarray:
    """l1-normalized histogram of nearest-centroid assignments."""
    segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    if len(segments) == 0 or segments.size == 0:
        raise EmptyEvent("cannot encode an event with no segments")
    counts = np.bincount(assign_nearest(segments, codebook.centroids),
                         minlength=codebook.size).astype(np.float64)
    return counts / counts.sum()


def pbow_encode(segments: np.ndarray, codebook: Codebook,
                levels: int) -> np.ndarray:
    """Temporal-pyramid BoW: level l splits the sequence into 2^l cells.

    Cells are near-equal contiguous runs (remainder to the earlier cells);
    each cell is l1-encoded on its own, all cells are concatenated and the
    result is globally l1-normalized. Dimension = V * (2^levels - 1).
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    if len(segments) == 0 or segments.size == 0:
        raise EmptyEvent("cannot encode an event with no segments")
    n = len(segments)
    parts = []
    for level in range(levels):
        cells = 2 ** level
        base, rem = divmod(n, cells)
        start = 0
        for cell in range(cells):
            size = base + (1 if cell < rem else 0)
            chunk = segments[start:start + size]
            start += size
            if len(chunk) == 0:
                parts.append(np.zeros(codebook.size))
            else:
                parts.append(bow_encode(chunk, codebook))
    hist = np.concatenate(parts)
    total = hist.sum()
    return hist / total if total > 0 else hist


def max_vote(raw_phi: np.ndarray) -> int:
    """Index of the bank regressor with the largest raw response."""
    raw_phi = np.asarray(raw_phi, dtype=np.float64)
    if raw_phi.size == 0:
        raise ValueError("raw descriptor must be non-empty")
    return int(np.argmax(raw_phi))
