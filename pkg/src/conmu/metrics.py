"""Evaluation suite: accuracies, membership-inference efficacy, composite score.

Accuracy is reported on the test set (TA), the forget set (FA) and the
retain set (RA). Membership inference uses a confidence-threshold predictor
trained to separate retain-set members from test-set non-members; its
efficacy on the forget set is the fraction predicted as non-members
(TN / |forget|), so higher means less residual information. The composite
score condenses the FA/RA/MIA gaps to the retrained reference into
``exp(-(sum of absolute relative gaps))``: 1 means indistinguishable from
retraining. Rates are fractions in [0, 1] internally and percentages at
the reporting interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import ForgetSplit, LabeledDataset, exclude_class
from .model import ClassifierState, accuracy, forward_probs

CONFIDENCE_FEATURES = ("true_class_prob", "max_softmax")


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one unlearning run (rates as fractions in [0, 1])."""

    ta: float
    fa: float
    ra: float
    mia: float
    rte_seconds: Optional[float]
    work_units: int
    frm: float
    mia_degenerate: bool = False

    def __post_init__(self):
        for name in ("ta", "fa", "ra", "mia"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.frm <= 1.0:
            raise ValueError(f"frm must lie in (0, 1], got {self.frm}")

    def to_json_dict(self) -> dict:
        """Interface form: percentage-scale rates, score and costs raw."""
        return {
            "ta": 100.0 * self.ta,
            "fa": 100.0 * self.fa,
            "ra": 100.0 * self.ra,
            "mia": 100.0 * self.mia,
            "rte_seconds": self.rte_seconds,
            "work_units": self.work_units,
            "frm": self.frm,
            "mia_degenerate": self.mia_degenerate,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "MetricsReport":
        return cls(ta=d["ta"] / 100.0, fa=d["fa"] / 100.0, ra=d["ra"] / 100.0,
                   mia=d["mia"] / 100.0, rte_seconds=d.get("rte_seconds"),
                   work_units=d["work_units"], frm=d["frm"],
                   mia_degenerate=d.get("mia_degenerate", False))


@dataclass(frozen=True)
class MiaPredictor:
    """One-dimensional confidence-threshold membership rule.

    A sample is predicted *member* when its confidence feature is >= the
    threshold, non-member when below. ``degenerate`` marks a predictor whose
    best achievable balanced accuracy is chance level.
    """

    kind: str
    threshold: float
    feature: str
    balanced_accuracy: float = 1.0
    degenerate: bool = False

    def __post_init__(self):
        if self.kind != "threshold_on_confidence":
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.feature not in CONFIDENCE_FEATURES:
            raise ValueError(f"unknown confidence feature {self.feature!r}")


def confidence_feature(model: ClassifierState, data: LabeledDataset,
                       feature: str = "true_class_prob") -> np.ndarray:
    """Per-sample membership confidence under the given model."""
    probs = forward_probs(model, data)
    if feature == "true_class_prob":
        return probs[np.arange(data.n_samples), data.labels]
    if feature == "max_softmax":
        return probs.max(axis=1)
    raise ValueError(f"unknown confidence feature {feature!r}")


def fit_threshold(member_conf: np.ndarray, nonmember_conf: np.ndarray
                  ) -> tuple[float, float]:
    """Best balanced-accuracy threshold over the observed candidate grid.

    Candidates are the distinct observed confidences plus 1.0 (the
    all-non-member rule). Ties resolve toward the lower threshold. Returns
    (threshold, balanced_accuracy).
    """
    candidates = np.unique(np.concatenate([member_conf, nonmember_conf, [1.0]]))
    best_t, best_ba = 0.0, -1.0
    for t in candidates:
        tpr = float(np.mean(member_conf >= t))
        tnr = float(np.mean(nonmember_conf < t))
        ba = 0.5 * (tpr + tnr)
        if ba > best_ba:
            best_t, best_ba = float(t), ba
    return best_t, best_ba


def train_mia(model: ClassifierState, retain: LabeledDataset, test: LabeledDataset,
              feature: str = "true_class_prob") -> MiaPredictor:
    """Fit the membership predictor on retain-set members vs test-set non-members."""
    if retain.n_samples == 0 or test.n_samples == 0:
        raise ValueError("both the retain and test pools must be non-empty")
    member_conf = confidence_feature(model, retain, feature)
    nonmember_conf = confidence_feature(model, test, feature)
    threshold, ba = fit_threshold(member_conf, nonmember_conf)
    return MiaPredictor("threshold_on_confidence", threshold, feature,
                        balanced_accuracy=ba, degenerate=ba <= 0.5)


def efficacy_from_confidences(confidences: np.ndarray, threshold: float) -> float:
    """Fraction of confidences strictly below the threshold (non-member side)."""
    confidences = np.asarray(confidences)
    if confidences.size == 0:
        raise ValueError("efficacy of an empty forget set is undefined")
    return float(np.mean(confidences < threshold))


def mia_efficacy(predictor: MiaPredictor, model: ClassifierState,
                 forget: LabeledDataset) -> float:
    """TN / |forget|: fraction of forget samples predicted non-member."""
    conf = confidence_feature(model, forget, predictor.feature)
    return efficacy_from_confidences(conf, predictor.threshold)


def frm_score(unlearned_metrics: Sequence[float],
              retrained_metrics: Sequence[float]) -> float:
    """Composite privacy score from (fa, ra, mia) triples.

    ``exp(-(|fa_u - fa_r|/fa_r + |ra_u - ra_r|/ra_r + |mia_u - mia_r|/mia_r))``.
    Both triples must be on the same scale (the reporting pipeline passes
    percentages; ratios cancel the scale). Retrained values are denominators
    and must be strictly positive.
    """
    fa_u, ra_u, mia_u = (float(v) for v in unlearned_metrics)
    fa_r, ra_r, mia_r = (float(v) for v in retrained_metrics)
    for name, v in (("fa", fa_r), ("ra", ra_r), ("mia", mia_r)):
        if v <= 0:
            raise ValueError(f"retrained {name} must be strictly positive "
                             f"(got {v}); the score is undefined otherwise")
    gap = (abs(fa_u - fa_r) / fa_r + abs(ra_u - ra_r) / ra_r
           + abs(mia_u - mia_r) / mia_r)
    return math.exp(-gap)


def evaluate(model: ClassifierState, split: ForgetSplit, test: LabeledDataset,
             predictor: MiaPredictor,
             timing: tuple[Optional[float], int] = (None, 0),
             reference: Optional[MetricsReport] = None) -> MetricsReport:
    """Assemble the metrics report for one model.

    For class-wise forgetting the target class is excluded from the test
    set before computing TA. ``reference`` holds the retrained model's
    report; when omitted the model is scored against itself (frm == 1.0),
    which is how the reference report itself is built.
    """
    ta_set = test
    if split.mode == "class_wise":
        ta_set = exclude_class(test, split.target_class)
    ta = accuracy(model, ta_set)
    fa = accuracy(model, split.forget)
    ra = accuracy(model, split.retain)
    mia = mia_efficacy(predictor, model, split.forget)
    if reference is None:
        frm = frm_score((fa, ra, mia), (fa, ra, mia))
    else:
        frm = frm_score((100 * fa, 100 * ra, 100 * mia),
                        (100 * reference.fa, 100 * reference.ra, 100 * reference.mia))
    rte_seconds, work_units = timing
    return MetricsReport(ta=ta, fa=fa, ra=ra, mia=mia, rte_seconds=rte_seconds,
                         work_units=work_units, frm=frm,
                         mia_degenerate=predictor.degenerate)
