"""Desk-scale MLP classifier: forward pass, SGD training, pruning, snapshots.

Model states are values: every operation returns a new state and never
mutates its inputs, so models can be evaluated and trained concurrently.
A single training call is internally single-threaded and fully determined
by its seed. All arithmetic is float64.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .data import LabeledDataset

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    """Fully-connected architecture: input width, hidden widths, class count."""

    kind: str
    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.kind != "mlp":
            raise ValueError(f"unsupported architecture kind {self.kind!r}")
        if len(self.layer_widths) < 3:
            raise ValueError("need at least one hidden layer (input, hidden..., classes)")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if self.activation not in _kernels.ACT_KINDS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def act_kind(self) -> int:
        return _kernels.ACT_KINDS[self.activation]


def mlp(n_features: int, hidden: tuple[int, ...], n_classes: int,
        activation: str = "relu") -> ArchitectureSpec:
    """Convenience constructor for an MLP architecture."""
    return ArchitectureSpec("mlp", (n_features, *hidden, n_classes), activation)


def param_layout(widths) -> list[tuple[str, int, tuple[int, ...]]]:
    """(name, flat offset, shape) for each weight matrix and bias vector."""
    table = []
    off = 0
    for l in range(len(widths) - 1):
        fan_in, fan_out = widths[l], widths[l + 1]
        table.append((f"W{l}", off, (fan_in, fan_out)))
        off += fan_in * fan_out
        table.append((f"b{l}", off, (fan_out,)))
        off += fan_out
    return table


def param_count(widths) -> int:
    return sum(widths[l] * widths[l + 1] + widths[l + 1] for l in range(len(widths) - 1))


def weight_indices(arch: ArchitectureSpec) -> np.ndarray:
    """Flat indices of weight-matrix entries (biases excluded)."""
    idx = []
    for name, off, shape in param_layout(arch.layer_widths):
        if name.startswith("W"):
            size = int(np.prod(shape))
            idx.append(np.arange(off, off + size))
    return np.concatenate(idx)


@dataclass(frozen=True)
class ClassifierState:
    """One classifier: architecture, flat parameters, prune mask, provenance."""

    arch: ArchitectureSpec
    params: np.ndarray      # float64, flat
    prune_mask: np.ndarray  # bool, aligned to params; True = active
    rng_seed: int
    trained_epochs: int = 0

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        mask = np.ascontiguousarray(self.prune_mask, dtype=bool)
        params.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "prune_mask", mask)
        expected = param_count(self.arch.layer_widths)
        if params.shape != (expected,) or mask.shape != (expected,):
            raise ValueError(f"params/mask length {params.shape} does not match "
                             f"architecture layout ({expected})")
        if np.any(params[~mask] != 0.0):
            raise ValueError("masked-out parameters must be exactly 0.0")


@dataclass(frozen=True)
class TrainConfig:
    """Minibatch SGD schedule."""

    epochs: int = 5
    learning_rate: float = 1e-2
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


def init_model(arch: ArchitectureSpec, seed: int) -> ClassifierState:
    """Fresh model: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(param_count(arch.layer_widths))
    for name, off, shape in param_layout(arch.layer_widths):
        if name.startswith("W"):
            bound = 1.0 / np.sqrt(shape[0])
            params[off:off + shape[0] * shape[1]] = rng.uniform(
                -bound, bound, size=shape[0] * shape[1])
    mask = np.ones(params.shape, dtype=bool)
    return ClassifierState(arch, params, mask, rng_seed=seed)


def _check_features(model: ClassifierState, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != model.arch.n_inputs:
        raise ValueError(f"feature dimension {X.shape} does not match "
                         f"architecture input width {model.arch.n_inputs}")


def forward_probs(model: ClassifierState, data: LabeledDataset) -> np.ndarray:
    """Softmax class probabilities, one row per sample (rows sum to 1)."""
    _check_features(model, data.features)
    return _kernels.forward_probs(model.params, model.arch.layer_widths,
                                  model.arch.act_kind, data.features)


def _sgd(model: ClassifierState, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
         lr: float, teacher_probs: Optional[np.ndarray], kl_weight: float) -> np.ndarray:
    """Run cfg.epochs of minibatch SGD and return the new flat parameters."""
    n = X.shape[0]
    batch = cfg.batch_size
    if batch > n:
        logger.warning("batch_size %d exceeds dataset size %d; clipped", batch, n)
        batch = n
    params = model.params.copy()
    mask_u8 = model.prune_mask.astype(np.uint8)
    rng = np.random.default_rng(cfg.seed)
    widths = model.arch.layer_widths
    act = model.arch.act_kind
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        _kernels.train_epoch(params, mask_u8, widths, act, X, y, perm,
                             batch, lr, teacher_probs, kl_weight)
    return params


def train(model: ClassifierState, data: LabeledDataset, cfg: TrainConfig,
          teacher_probs: Optional[np.ndarray] = None,
          kl_weight: float = 0.0) -> ClassifierState:
    """Minibatch SGD on mean cross-entropy; returns the trained state.

    Shuffling is drawn from ``cfg.seed`` alone. Masked parameters receive
    gradient updates and are then reset to zero after every step.
    Optionally adds ``kl_weight`` times the KL divergence from fixed
    per-sample ``teacher_probs`` (aligned to ``data`` rows) to the loss.
    """
    if data.n_samples == 0:
        raise ValueError("cannot train on an empty dataset")
    _check_features(model, data.features)
    if kl_weight == 0.0:
        teacher_probs = None
    params = _sgd(model, data.features, data.labels, cfg, cfg.learning_rate,
                  teacher_probs, kl_weight)
    return replace(model, params=params,
                   trained_epochs=model.trained_epochs + cfg.epochs)


def omp_prune(model: ClassifierState, sparsity: float) -> ClassifierState:
    """One-shot magnitude pruning over the global weight pool.

    Zeroes and mask-deactivates the ``floor(sparsity * n_weights)`` weight
    entries of smallest absolute value; biases are exempt and ties break
    toward the lower flat index.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must lie in [0, 1)")
    if sparsity == 0.0:
        return model
    w_idx = weight_indices(model.arch)
    k = int(sparsity * w_idx.size)
    if k == 0:
        return model
    order = np.argsort(np.abs(model.params[w_idx]), kind="stable")
    drop = w_idx[order[:k]]
    params = model.params.copy()
    mask = model.prune_mask.copy()
    params[drop] = 0.0
    mask[drop] = False
    return replace(model, params=params, prune_mask=mask)


def accuracy(model: ClassifierState, data: LabeledDataset) -> float:
    """Fraction of samples whose argmax probability matches the label.

    Argmax ties resolve to the lowest class index.
    """
    if data.n_samples == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    preds = np.argmax(forward_probs(model, data), axis=1)
    return float(np.mean(preds == data.labels))


def mean_cross_entropy(model: ClassifierState, data: LabeledDataset) -> float:
    """Mean negative log-probability of the true labels."""
    if data.n_samples == 0:
        raise ValueError("cross-entropy of an empty dataset is undefined")
    probs = forward_probs(model, data)
    return float(-np.mean(np.log(probs[np.arange(data.n_samples), data.labels])))


def loss_and_grad(model: ClassifierState, data: LabeledDataset,
                  teacher_probs: Optional[np.ndarray] = None,
                  kl_weight: float = 0.0) -> tuple[float, np.ndarray]:
    """Full-batch loss (CE + kl_weight * KL) and its parameter gradient."""
    _check_features(model, data.features)
    return _kernels.loss_and_grad(model.params, model.arch.layer_widths,
                                  model.arch.act_kind, data.features, data.labels,
                                  teacher_probs, kl_weight)


def save_model(model: ClassifierState, path) -> None:
    """Write a versioned JSON snapshot; parameter round-trip is bit-exact."""
    record = {
        "format_version": SNAPSHOT_VERSION,
        "arch": {"kind": model.arch.kind,
                 "layer_widths": list(model.arch.layer_widths),
                 "activation": model.arch.activation},
        "rng_seed": model.rng_seed,
        "trained_epochs": model.trained_epochs,
        "dtype": "<f8",
        "params_b64": base64.b64encode(
            model.params.astype("<f8").tobytes()).decode("ascii"),
        "mask_b64": base64.b64encode(
            np.packbits(model.prune_mask).tobytes()).decode("ascii"),
    }
    Path(path).write_text(json.dumps(record, indent=1), encoding="utf-8")


def load_model(path) -> ClassifierState:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format_version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {record.get('format_version')}")
    arch = ArchitectureSpec(record["arch"]["kind"],
                            tuple(record["arch"]["layer_widths"]),
                            record["arch"]["activation"])
    n = param_count(arch.layer_widths)
    params = np.frombuffer(base64.b64decode(record["params_b64"]), dtype="<f8").copy()
    packed = np.frombuffer(base64.b64decode(record["mask_b64"]), dtype=np.uint8)
    mask = np.unpackbits(packed)[:n].astype(bool)
    return ClassifierState(arch, params, mask, record["rng_seed"],
                           record["trained_epochs"])
