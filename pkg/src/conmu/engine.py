"""Unlearning methods: the controllable fine-tuning pipeline and baselines.

The main pipeline runs, in order: optional one-shot magnitude pruning,
band selection on the forget and retain sets (scored with the pruned
original model), Gaussian obfuscation of the selected forget samples,
proxy training on the full retain set, and fine-tuning of the pruned
original on the union of obfuscated-forget and selected-retain samples
under a combined cross-entropy + KL objective.

Baselines: retrain from scratch on the retain set (the gold reference),
plain fine-tuning on the retain set, and gradient ascent on the forget set.

Alongside wall-clock time every method reports deterministic work units,
counted as gradient-training sample passes (epochs times samples seen);
scoring and noising passes are excluded. Wall clock is hardware-bound, so
tests and sweeps compare work units.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import ForgetSplit, LabeledDataset, concat
from .model import (ArchitectureSpec, ClassifierState, TrainConfig, _sgd,
                    forward_probs, init_model, omp_prune, train)
from .noise import NoiseConfig, apply_noise
from .proxy import ProxyConfig, train_proxy
from .selection import SelectionBound, band_for_kept_fraction, el2n_scores, select_bounded

logger = logging.getLogger(__name__)

# Fine-tune schedule and knob defaults follow the reference hyperparameter
# table for the random-forgetting image benchmark.
DEFAULT_FORGET_BOUND = SelectionBound(0.85, 1.0)
DEFAULT_RETAIN_BOUND = SelectionBound(0.17, 0.3)


@dataclass(frozen=True)
class ControlKnobs:
    """The full hyperparameter vector of one unlearning run."""

    forget_bound: SelectionBound = DEFAULT_FORGET_BOUND
    retain_bound: SelectionBound = DEFAULT_RETAIN_BOUND
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    gamma: float = 0.5
    finetune: TrainConfig = field(default_factory=TrainConfig)
    prune_sparsity: float = 0.0
    # When set, overrides both bounds with the smallest symmetric band that
    # keeps at least this fraction of each of the forget and retain pools.
    kept_fraction: Optional[float] = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 <= self.prune_sparsity < 1.0:
            raise ValueError("prune_sparsity must lie in [0, 1)")
        if self.kept_fraction is not None and not 0.0 < self.kept_fraction <= 1.0:
            raise ValueError("kept_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class UnlearnRun:
    """Outcome of one unlearning run plus audit bookkeeping."""

    unlearned: ClassifierState
    d_new_size: int
    selected_forget_size: int
    selected_retain_size: int
    wall_time_seconds: float
    work_units: int
    knob_snapshot: ControlKnobs
    d_new: LabeledDataset  # exact data the fine-tune stage saw (audit)

    def __post_init__(self):
        if self.d_new_size != self.selected_forget_size + self.selected_retain_size:
            raise ValueError("d_new_size must equal the sum of the selected sizes")

    def to_json_dict(self, model_ref: Optional[str] = None) -> dict:
        k = self.knob_snapshot
        return {
            "d_new_size": self.d_new_size,
            "selected_forget_size": self.selected_forget_size,
            "selected_retain_size": self.selected_retain_size,
            "wall_time_seconds": self.wall_time_seconds,
            "work_units": self.work_units,
            "knobs": {
                "forget_bound": {"z_lower": k.forget_bound.z_lower,
                                 "z_upper": k.forget_bound.z_upper},
                "retain_bound": {"z_lower": k.retain_bound.z_lower,
                                 "z_upper": k.retain_bound.z_upper},
                "noise": {"alpha": k.noise.alpha, "noise_mean": k.noise.noise_mean,
                          "noise_std": k.noise.noise_std, "seed": k.noise.seed},
                "proxy": {"delta_epochs": k.proxy.delta_epochs,
                          "learning_rate": k.proxy.learning_rate,
                          "batch_size": k.proxy.batch_size, "seed": k.proxy.seed},
                "gamma": k.gamma,
                "finetune": {"epochs": k.finetune.epochs,
                             "learning_rate": k.finetune.learning_rate,
                             "batch_size": k.finetune.batch_size,
                             "seed": k.finetune.seed},
                "prune_sparsity": k.prune_sparsity,
                "kept_fraction": k.kept_fraction,
            },
            "model_ref": model_ref,
        }


def conmu_unlearn(original: ClassifierState, split: ForgetSplit,
                  knobs: ControlKnobs) -> UnlearnRun:
    """Run the full controllable unlearning pipeline against one forget request.

    The returned model is the pruned original fine-tuned on the union of
    the obfuscated selected-forget samples and the selected-retain samples,
    under ``CE + gamma * KL(proxy || model)``. Wall time covers selection
    through fine-tuning (pruning is an input transformation).
    """
    pruned = omp_prune(original, knobs.prune_sparsity)
    t0 = time.perf_counter()

    if knobs.kept_fraction is not None:
        forget_bound = band_for_kept_fraction(
            el2n_scores(pruned, split.forget), knobs.kept_fraction)
        retain_bound = band_for_kept_fraction(
            el2n_scores(pruned, split.retain), knobs.kept_fraction)
    else:
        forget_bound, retain_bound = knobs.forget_bound, knobs.retain_bound

    sel_forget = select_bounded(pruned, split.forget, forget_bound)
    sel_retain = select_bounded(pruned, split.retain, retain_bound)
    if sel_forget.kept.n_samples == 0 and sel_retain.kept.n_samples == 0:
        raise ValueError("both selection bands are empty; nothing to fine-tune on")

    noised_forget = apply_noise(sel_forget.kept, knobs.noise)
    teacher = train_proxy(original.arch, split.retain, knobs.proxy)
    d_new = concat(noised_forget, sel_retain.kept)

    teacher_probs = forward_probs(teacher, d_new) if knobs.gamma != 0.0 else None
    unlearned = train(pruned, d_new, knobs.finetune,
                      teacher_probs=teacher_probs, kl_weight=knobs.gamma)
    wall = time.perf_counter() - t0

    work = (knobs.proxy.delta_epochs * split.retain.n_samples
            + knobs.finetune.epochs * d_new.n_samples)
    return UnlearnRun(unlearned=unlearned,
                      d_new_size=d_new.n_samples,
                      selected_forget_size=noised_forget.n_samples,
                      selected_retain_size=sel_retain.kept.n_samples,
                      wall_time_seconds=wall,
                      work_units=work,
                      knob_snapshot=replace(knobs, forget_bound=forget_bound,
                                            retain_bound=retain_bound),
                      d_new=d_new)


def retrain_baseline(arch: ArchitectureSpec, retain: LabeledDataset,
                     cfg: TrainConfig) -> ClassifierState:
    """Train a fresh model on the retain set only: the gold reference."""
    if retain.n_samples == 0:
        raise ValueError("cannot retrain on an empty retain set")
    return train(init_model(arch, cfg.seed), retain, cfg)


def finetune_baseline(original: ClassifierState, retain: LabeledDataset,
                      cfg: TrainConfig) -> ClassifierState:
    """Continue SGD from the original model on the retain set."""
    if retain.n_samples == 0:
        raise ValueError("cannot fine-tune on an empty retain set")
    return train(original, retain, cfg)


def gradient_ascent_baseline(original: ClassifierState, forget: LabeledDataset,
                             cfg: TrainConfig) -> ClassifierState:
    """Sign-flipped SGD on the forget set: each step climbs the CE loss."""
    if forget.n_samples == 0:
        raise ValueError("cannot run gradient ascent on an empty forget set")
    params = _sgd(original, forget.features, forget.labels, cfg,
                  -cfg.learning_rate, None, 0.0)
    return replace(original, params=params,
                   trained_epochs=original.trained_epochs + cfg.epochs)


def method_work_units(method: str, split: ForgetSplit, cfg: TrainConfig) -> int:
    """Gradient-training sample passes for the non-pipeline methods."""
    if method == "retrain":
        return cfg.epochs * split.retain.n_samples
    if method == "finetune":
        return cfg.epochs * split.retain.n_samples
    if method == "gradient_ascent":
        return cfg.epochs * split.forget.n_samples
    raise ValueError(f"unknown method {method!r}")
