"""Unlearning proxy: a cheap stand-in for the retrained reference model.

The proxy shares the target architecture but starts from a fresh random
initialization and trains on the retain set only, for a small number of
epochs. Its output distribution is transferred to the model being unlearned
through a KL-divergence penalty (teacher on the left, natural-log units).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import PROB_FLOOR
from .data import LabeledDataset
from .model import ArchitectureSpec, ClassifierState, TrainConfig, forward_probs, init_model, train


@dataclass(frozen=True)
class ProxyConfig:
    """Schedule for the partially-trained proxy."""

    delta_epochs: int = 1
    learning_rate: float = 1e-2
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.delta_epochs < 0:
            raise ValueError("delta_epochs must be nonnegative")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be positive and batch_size >= 1")


def train_proxy(arch: ArchitectureSpec, retain: LabeledDataset,
                cfg: ProxyConfig) -> ClassifierState:
    """Train a fresh model on the retain set only, for exactly delta epochs."""
    if retain.n_samples == 0:
        raise ValueError("cannot train a proxy on an empty retain set")
    proxy = init_model(arch, cfg.seed)
    schedule = TrainConfig(epochs=cfg.delta_epochs, learning_rate=cfg.learning_rate,
                           batch_size=cfg.batch_size, seed=cfg.seed)
    return train(proxy, retain, schedule)


def _smoothed(p: np.ndarray) -> np.ndarray:
    q = np.clip(p, PROB_FLOOR, 1.0)
    return q / q.sum(axis=1, keepdims=True)


def kl_divergence(teacher_probs: np.ndarray, student_probs: np.ndarray) -> float:
    """Mean over rows of ``sum_i p_T(i) * ln(p_T(i) / p_S(i))``, smoothed.

    Probabilities are clamped to ``[PROB_FLOOR, 1]`` and renormalized before
    the log ratio, which caps the effect of saturated softmax outputs far
    below any test tolerance.
    """
    qt = _smoothed(np.asarray(teacher_probs, dtype=np.float64))
    qs = _smoothed(np.asarray(student_probs, dtype=np.float64))
    return float(np.mean(np.sum(qt * (np.log(qt) - np.log(qs)), axis=1)))


def kl_loss(teacher: ClassifierState, student: ClassifierState,
            batch: LabeledDataset) -> float:
    """KL divergence of the student from the teacher, averaged over the batch."""
    if batch.n_samples == 0:
        raise ValueError("kl_loss of an empty batch is undefined")
    if teacher.arch.n_inputs != student.arch.n_inputs or \
            teacher.arch.n_classes != student.arch.n_classes:
        raise ValueError("teacher and student architectures are incompatible")
    return kl_divergence(forward_probs(teacher, batch), forward_probs(student, batch))
