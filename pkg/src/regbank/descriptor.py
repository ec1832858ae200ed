"""Bank-of-regressors descriptors.

For an event of N segments, the sequence is zero-padded to 5N (2N zero
feature vectors on each side) and every class-specific regressor is run over
it. Segment votes are weighted by the matcher posterior for that class and
accumulated into onset/offset confidence curves over the padded grid; the
descriptor entry for a class is the mean of the two curve maxima. The
unstructured companion descriptor is simply the mean per-segment posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .matcher import FoldedMatchers, MatcherModel
from .regforest import RegressorForest, gaussian_pdf


@dataclass
class ScoreCurves:
    """Onset/offset confidence over the padded index grid."""

    f_plus: np.ndarray
    f_minus: np.ndarray

    def __len__(self) -> int:
        return len(self.f_plus)


@dataclass
class BorDescriptor:
    phi: np.ndarray
    phi_hat: np.ndarray | None = None
    state: str = "raw"  # raw | max | l1


@dataclass
class NormalizationStats:
    """Per-class training maxima, plus kernel scales when fusion is used."""

    max_phi: np.ndarray
    kernel_scales: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_phi": [float(v) for v in self.max_phi],
            "kernel_scales": {k: float(v)
                              for k, v in self.kernel_scales.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "NormalizationStats":
        return NormalizationStats(
            max_phi=np.asarray(d["max_phi"], dtype=np.float64),
            kernel_scales={k: float(v)
                           for k, v in d.get("kernel_scales", {}).items()},
        )


def pad_sequence(features: np.ndarray, factor: int = 5) -> np.ndarray:
    """Zero-pad a (N, dim) sequence to factor*N rows.

    (factor-1)/2 * N all-zero feature rows go on each side, so the factor
    must be odd; the original rows sit at [pad, pad + N).
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if len(features) == 0:
        raise ValueError("sequence must be non-empty")
    if factor < 1 or factor % 2 == 0:
        raise ValueError("pad factor must be a positive odd integer")
    if factor == 1:
        return features
    pad = pad_offset(len(features), factor)
    zeros = np.zeros((pad, features.shape[1]))
    return np.vstack([zeros, features, zeros])


def pad_offset(n_segments: int, factor: int = 5) -> int:
    """Index of the first original segment inside the padded grid."""
    return ((factor - 1) // 2) * n_segments


def weighted_score_curves(forest: RegressorForest, weights: np.ndarray,
                          padded: np.ndarray) -> ScoreCurves:
    """Accumulate posterior-weighted onset/offset densities over the grid.

    ``weights[i]`` is P(c|x_i) for the padded segment at index i; every
    segment contributes its forest density (average of shifted per-leaf
    Gaussians) scaled by its weight, summed over all segments.
    """
    padded = np.atleast_2d(np.asarray(padded, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    m = len(padded)
    if len(weights) != m:
        raise DimensionMismatch("one weight per padded segment required")
    grid = np.arange(m, dtype=np.float64)
    positions = np.arange(m, dtype=np.float64)

    mean_on, var_on, mean_off, var_off = forest.leaf_params(padded)
    f_plus = np.zeros(m)
    f_minus = np.zeros(m)
    for t in range(forest.n_trees):
        centers_on = positions - mean_on[t]
        centers_off = positions + mean_off[t]
        pdf_on = gaussian_pdf(grid[None, :], centers_on[:, None],
                              var_on[t][:, None])
        pdf_off = gaussian_pdf(grid[None, :], centers_off[:, None],
                               var_off[t][:, None])
        f_plus += weights @ pdf_on
        f_minus += weights @ pdf_off
    t = forest.n_trees
    return ScoreCurves(f_plus / t, f_minus / t)


def score_curves(forest: RegressorForest, matcher: MatcherModel,
                 padded: np.ndarray) -> ScoreCurves:
    """Curves for the forest's class with weights taken from the matcher."""
    post = matcher.posterior_matrix(padded)
    weights = post[:, matcher.class_index(forest.class_id)]
    return weighted_score_curves(forest, weights, padded)


def phi_entry(curves: ScoreCurves) -> float:
    """Mean of the onset and offset curve maxima."""
    if len(curves) == 0:
        raise ValueError("curves must be non-empty")
    return 0.5 * (float(curves.f_plus.max()) + float(curves.f_minus.max()))


def extract_bor(bank: list[RegressorForest], matcher: MatcherModel,
                features: np.ndarray, pad_factor: int = 5) -> np.ndarray:
    """Raw descriptor: one curve-maxima entry per bank regressor, in order."""
    padded = pad_sequence(features, pad_factor)
    post = matcher.posterior_matrix(padded)
    phi = np.empty(len(bank))
    for i, forest in enumerate(bank):
        weights = post[:, matcher.class_index(forest.class_id)]
        phi[i] = phi_entry(weighted_score_curves(forest, weights, padded))
    return phi


def extract_unstructured(matcher: MatcherModel,
                         features: np.ndarray) -> np.ndarray:
    """Mean per-segment posterior over the unpadded event, l1-normalized."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if len(features) == 0:
        raise ValueError("event must have at least one segment")
    mean_post = matcher.posterior_matrix(features).mean(axis=0)
    total = mean_post.sum()
    return mean_post / total if total > 0 else mean_post


def fit_normalizer(raw_phis: np.ndarray) -> NormalizationStats:
    """Per-dimension maxima over the training descriptors."""
    raw_phis = np.atleast_2d(np.asarray(raw_phis, dtype=np.float64))
    if len(raw_phis) == 0:
        raise ValueError("need at least one training descriptor")
    return NormalizationStats(max_phi=raw_phis.max(axis=0))


def normalize(raw_phi: np.ndarray, stats: NormalizationStats,
              phi_hat: np.ndarray | None = None) -> BorDescriptor:
    """Divide by the training maxima, then l1-normalize.

    Dimensions whose training maximum is zero map to zero; an all-zero
    vector is kept as-is rather than divided by its zero sum. Test values
    above the training maximum are not clamped.
    """
    raw_phi = np.asarray(raw_phi, dtype=np.float64)
    scaled = np.where(stats.max_phi > 0, raw_phi / np.where(
        stats.max_phi > 0, stats.max_phi, 1.0), 0.0)
    total = scaled.sum()
    phi = scaled / total if total > 0 else scaled
    return BorDescriptor(phi=phi, phi_hat=phi_hat, state="l1")


def extract_training_descriptors(
        event_features: list[np.ndarray], bank: list[RegressorForest],
        folded: FoldedMatchers, pad_factor: int = 5, workers: int = 1,
) -> tuple[np.ndarray, np.ndarray, NormalizationStats, np.ndarray]:
    """Descriptors for training events without matcher leakage.

    Each event's posteriors come from the matcher of its fold complement;
    the bank regressors are the full-data forests. Returns the raw phi
    matrix, the phi_hat matrix, the fitted normalizer and the normalized
    phi matrix.
    """
    def one(i: int) -> tuple[np.ndarray, np.ndarray]:
        m = folded.matcher_for_event(i)
        raw = extract_bor(bank, m, event_features[i], pad_factor)
        hat = extract_unstructured(m, event_features[i])
        return raw, hat

    indices = range(len(event_features))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, indices))
    else:
        rows = [one(i) for i in indices]

    raw_phis = np.vstack([r[0] for r in rows])
    phi_hats = np.vstack([r[1] for r in rows])
    stats = fit_normalizer(raw_phis)
    normalized = np.vstack([normalize(r, stats).phi for r in raw_phis])
    return raw_phis, phi_hats, stats, normalized
