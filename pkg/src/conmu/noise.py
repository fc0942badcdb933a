"""Additive Gaussian obfuscation of selected forget samples.

Features are perturbed by ``alpha * N`` with ``N`` drawn i.i.d. per entry
from a normal distribution, so the perturbation itself is normal with mean
``alpha * noise_mean`` and variance ``alpha^2 * noise_std^2``. Noise is
applied in raw feature space with no clipping; labels, ids and shape are
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset


@dataclass(frozen=True)
class NoiseConfig:
    """Noise intensity ``alpha`` and the parameters of the underlying draw."""

    alpha: float = 3.0
    noise_mean: float = 0.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


def apply_noise(selected_forget: LabeledDataset, cfg: NoiseConfig) -> LabeledDataset:
    """Return a copy of the dataset with noise added to every feature entry.

    Deterministic given ``cfg.seed``; ``alpha == 0`` returns features
    bit-identical to the input.
    """
    if cfg.alpha == 0.0:
        return LabeledDataset(selected_forget.features.copy(),
                              selected_forget.labels,
                              selected_forget.n_classes,
                              selected_forget.sample_ids)
    rng = np.random.default_rng(cfg.seed)
    draw = rng.normal(cfg.noise_mean, cfg.noise_std,
                      size=selected_forget.features.shape)
    return LabeledDataset(selected_forget.features + cfg.alpha * draw,
                          selected_forget.labels,
                          selected_forget.n_classes,
                          selected_forget.sample_ids)
