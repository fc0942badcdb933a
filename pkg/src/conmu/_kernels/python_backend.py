"""Pure-numpy implementation of the training and inference kernels.

The compiled backend in ``_core.pyx`` implements the same contract; either
can serve all callers. Parameters travel as one flat float64 vector whose
layout is, per layer, the row-major weight matrix followed by the bias
vector. Activations: 0 = relu, 1 = tanh.
"""

from __future__ import annotations

import numpy as np

NAME = "python"

PROB_FLOOR = 1e-12  # smoothing floor applied to probabilities inside KL values


def _views(params: np.ndarray, widths) -> tuple[list, list]:
    Ws, bs = [], []
    off = 0
    for l in range(len(widths) - 1):
        fan_in, fan_out = int(widths[l]), int(widths[l + 1])
        Ws.append(params[off:off + fan_in * fan_out].reshape(fan_in, fan_out))
        off += fan_in * fan_out
        bs.append(params[off:off + fan_out])
        off += fan_out
    return Ws, bs


def _activate(z: np.ndarray, act_kind: int) -> np.ndarray:
    if act_kind == 0:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(h: np.ndarray, act_kind: int) -> np.ndarray:
    # Both activations expose their derivative through the post-activation
    # value: relu' = 1[h > 0], tanh' = 1 - h^2.
    if act_kind == 0:
        return (h > 0.0).astype(np.float64)
    return 1.0 - h * h


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(Ws, bs, X, act_kind):
    hs = [X]
    h = X
    for l in range(len(Ws) - 1):
        h = _activate(h @ Ws[l] + bs[l], act_kind)
        hs.append(h)
    logits = h @ Ws[-1] + bs[-1]
    return hs, logits


def forward_probs(params: np.ndarray, widths, act_kind: int, X: np.ndarray) -> np.ndarray:
    """Class probabilities for every row of X, via stable softmax."""
    Ws, bs = _views(params, widths)
    _, logits = _forward_cached(Ws, bs, X, act_kind)
    return _softmax(logits)


def _smoothed(p: np.ndarray) -> np.ndarray:
    q = np.clip(p, PROB_FLOOR, 1.0)
    return q / q.sum(axis=1, keepdims=True)


def _kl_value(teacher_probs: np.ndarray, student_probs: np.ndarray) -> float:
    qt = _smoothed(teacher_probs)
    qs = _smoothed(student_probs)
    return float(np.mean(np.sum(qt * (np.log(qt) - np.log(qs)), axis=1)))


def _output_delta(P, y, teacher_probs, gamma):
    b = P.shape[0]
    if teacher_probs is not None and gamma != 0.0:
        dZ = (1.0 + gamma) * P - gamma * teacher_probs
    else:
        dZ = P.copy()
    dZ[np.arange(b), y] -= 1.0
    dZ /= b
    return dZ


def loss_and_grad(params: np.ndarray, widths, act_kind: int,
                  X: np.ndarray, y: np.ndarray,
                  teacher_probs: np.ndarray | None, gamma: float):
    """Mean cross-entropy (+ gamma * KL to the teacher) and its gradient.

    The loss value smooths probabilities with ``PROB_FLOOR`` inside the KL
    term; the gradient is the exact softmax expression, so the two agree to
    finite-difference accuracy whenever probabilities are unsaturated.
    """
    Ws, bs = _views(params, widths)
    hs, logits = _forward_cached(Ws, bs, X, act_kind)
    P = _softmax(logits)
    b = X.shape[0]
    loss = float(-np.mean(np.log(P[np.arange(b), y])))
    if teacher_probs is not None and gamma != 0.0:
        loss += gamma * _kl_value(teacher_probs, P)
    dZ = _output_delta(P, y, teacher_probs, gamma)
    grad = np.empty_like(params)
    gWs, gbs = _views(grad, widths)
    for l in reversed(range(len(Ws))):
        gWs[l][...] = hs[l].T @ dZ
        gbs[l][...] = dZ.sum(axis=0)
        if l > 0:
            dZ = (dZ @ Ws[l].T) * _act_grad(hs[l], act_kind)
    return loss, grad


def train_epoch(params: np.ndarray, mask: np.ndarray, widths, act_kind: int,
                X: np.ndarray, y: np.ndarray, perm: np.ndarray,
                batch_size: int, lr: float,
                teacher_probs: np.ndarray | None, gamma: float) -> None:
    """One epoch of minibatch SGD, updating ``params`` in place.

    Visits samples in ``perm`` order in consecutive slices of ``batch_size``
    (final batch may be short). After every step, masked parameters are
    reset to exactly 0.0.
    """
    Ws, bs = _views(params, widths)
    n = perm.shape[0]
    fully_active = bool(mask.all())
    inactive = np.flatnonzero(mask == 0) if not fully_active else None
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        Xb, yb = X[idx], y[idx]
        Tb = teacher_probs[idx] if (teacher_probs is not None and gamma != 0.0) else None
        hs, logits = _forward_cached(Ws, bs, Xb, act_kind)
        dZ = _output_delta(_softmax(logits), yb, Tb, gamma)
        for l in reversed(range(len(Ws))):
            gW = hs[l].T @ dZ
            gb = dZ.sum(axis=0)
            if l > 0:
                dZ = (dZ @ Ws[l].T) * _act_grad(hs[l], act_kind)
            Ws[l] -= lr * gW
            bs[l] -= lr * gb
        if not fully_active:
            params[inactive] = 0.0
