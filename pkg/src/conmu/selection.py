"""Important-data selection: per-sample normed-loss scores and band filtering.

Each sample is scored by the L2 distance between the model's softmax output
and the one-hot label; low scores are well-fit samples, high scores are
outliers. A band ``[mu - z_lower*sigma, mu + z_upper*sigma]`` around the
dataset's score mean keeps samples that matter for generalization while
discarding both extremes. Statistics are always computed over the dataset
being filtered, never pooled.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .model import ClassifierState, forward_probs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelectionBound:
    """Band half-widths in units of the score standard deviation."""

    z_lower: float
    z_upper: float

    def __post_init__(self):
        for v in (self.z_lower, self.z_upper):
            if not np.isfinite(v) or v < 0:
                raise ValueError("selection bounds must be finite and nonnegative")


UNBOUNDED = SelectionBound(1e9, 1e9)


@dataclass(frozen=True)
class SelectionResult:
    """Band-filter outcome: kept subset plus the statistics that defined it."""

    kept: LabeledDataset
    scores: np.ndarray   # aligned to the *input* dataset
    mu: float
    sigma: float
    kept_ids: np.ndarray


def el2n_scores(model: ClassifierState, data: LabeledDataset) -> np.ndarray:
    """Per-sample ``||softmax(f(x)) - onehot(y)||_2``; each value in [0, sqrt(2)]."""
    if data.n_samples == 0:
        raise ValueError("cannot score an empty dataset")
    probs = forward_probs(model, data)
    delta = probs.copy()
    delta[np.arange(data.n_samples), data.labels] -= 1.0
    return np.sqrt(np.sum(delta * delta, axis=1))


def select_bounded(model: ClassifierState, data: LabeledDataset,
                   bound: SelectionBound) -> SelectionResult:
    """Keep samples whose score lies within the band (inclusive endpoints).

    ``mu`` is the arithmetic mean and ``sigma`` the population standard
    deviation of the scores over ``data``. Sample order is preserved. An
    empty result is legal; it is logged as a warning, not raised.
    """
    scores = el2n_scores(model, data)
    mu = float(scores.mean())
    sigma = float(scores.std())  # population (divide-by-n)
    lo = mu - bound.z_lower * sigma
    hi = mu + bound.z_upper * sigma
    keep = np.flatnonzero((scores >= lo) & (scores <= hi))
    if keep.size == 0:
        logger.warning("selection band [%.6g, %.6g] kept no samples (n=%d)",
                       lo, hi, data.n_samples)
    kept = data.subset(keep)
    return SelectionResult(kept, scores, mu, sigma, kept.sample_ids)


def band_for_kept_fraction(scores: np.ndarray, fraction: float) -> SelectionBound:
    """Smallest symmetric band (z_lower == z_upper) keeping >= ``fraction`` of samples.

    Used by percentile-style sweeps: the band is widened until the kept
    fraction crosses the requested value. Ties at the boundary may keep
    slightly more than requested because band endpoints are inclusive.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    scores = np.asarray(scores, dtype=np.float64)
    mu = scores.mean()
    sigma = scores.std()
    if sigma == 0.0:
        return SelectionBound(0.0, 0.0)
    normalized = np.sort(np.abs(scores - mu) / sigma)
    k = int(np.ceil(fraction * scores.size))
    return SelectionBound(float(normalized[k - 1]), float(normalized[k - 1]))


def selection_to_csv(result: SelectionResult, data: LabeledDataset, path) -> None:
    """Audit export: one row per input sample with its score and kept flag."""
    kept = set(result.kept_ids.tolist())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "score", "kept"])
        for sid, score in zip(data.sample_ids.tolist(), result.scores.tolist()):
            writer.writerow([sid, repr(score), int(sid in kept)])
