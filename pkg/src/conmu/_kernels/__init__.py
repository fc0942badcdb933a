"""Kernel backend selection.

Two interchangeable implementations of the hot training/inference loops
exist: a compiled Cython extension (``_core``) and a pure-numpy fallback
(``python_backend``). The active one is chosen once at import time:

* ``CONMU_BACKEND=cython``  require the compiled extension (ImportError if absent)
* ``CONMU_BACKEND=python``  force the numpy fallback
* ``CONMU_BACKEND=auto``    compiled if available, else fallback (default)

Both backends are deterministic given identical inputs; across backends
results agree to float64 round-off but are not guaranteed bit-identical,
so reported results record which backend produced them.
"""

import os

from . import python_backend

_CHOICES = ("auto", "python", "cython")
_requested = os.environ.get("CONMU_BACKEND", "auto").lower()
if _requested not in _CHOICES:
    raise RuntimeError(f"CONMU_BACKEND must be one of {_CHOICES}, got {_requested!r}")

_impl = None
if _requested in ("auto", "cython"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "cython":
            raise
if _impl is None:
    _impl = python_backend

BACKEND = _impl.NAME
PROB_FLOOR = python_backend.PROB_FLOOR

forward_probs = _impl.forward_probs
train_epoch = _impl.train_epoch
loss_and_grad = _impl.loss_and_grad

ACT_RELU = 0
ACT_TANH = 1
ACT_KINDS = {"relu": ACT_RELU, "tanh": ACT_TANH}


def available_backends() -> dict:
    """Importable backend modules keyed by name."""
    out = {"python": python_backend}
    try:
        from . import _core
        out["cython"] = _core
    except ImportError:
        pass
    return out
