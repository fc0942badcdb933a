# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: fused forward/backward/SGD loops for small dense MLPs.

Mirrors the contract of ``python_backend`` exactly; see that module for the
parameter layout. All arithmetic is float64 with fixed accumulation order,
so results are reproducible run to run.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

NAME = "cython"

DEF PROB_FLOOR = 1e-12


cdef inline double _clip01(double v) noexcept nogil:
    if v < PROB_FLOOR:
        return PROB_FLOOR
    if v > 1.0:
        return 1.0
    return v


cdef void _layer_offsets(const long[::1] widths, long[::1] w_off, long[::1] b_off) noexcept nogil:
    cdef Py_ssize_t l, L = widths.shape[0] - 1
    cdef long off = 0
    for l in range(L):
        w_off[l] = off
        off += widths[l] * widths[l + 1]
        b_off[l] = off
        off += widths[l + 1]


cdef void _dense_forward(const double[::1] params, const long[::1] widths,
                         const long[::1] w_off, const long[::1] b_off,
                         int act_kind, double[:, ::1] h_in, double[:, ::1] h_out,
                         Py_ssize_t layer, Py_ssize_t b, bint apply_act) noexcept nogil:
    # h_out[:, :fan_out] = act(h_in[:, :fan_in] @ W + bias)
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t fan_in = widths[layer], fan_out = widths[layer + 1]
    cdef long wo = w_off[layer], bo = b_off[layer]
    cdef double hv, z
    for i in range(b):
        for j in range(fan_out):
            h_out[i, j] = params[bo + j]
        for k in range(fan_in):
            hv = h_in[i, k]
            if hv != 0.0:
                for j in range(fan_out):
                    h_out[i, j] = h_out[i, j] + hv * params[wo + k * fan_out + j]
        if apply_act:
            if act_kind == 0:
                for j in range(fan_out):
                    z = h_out[i, j]
                    h_out[i, j] = z if z > 0.0 else 0.0
            else:
                for j in range(fan_out):
                    h_out[i, j] = tanh(h_out[i, j])


cdef void _softmax_rows(double[:, ::1] logits, Py_ssize_t b, Py_ssize_t c) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(b):
        m = logits[i, 0]
        for j in range(1, c):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(c):
            logits[i, j] = exp(logits[i, j] - m)
            s += logits[i, j]
        for j in range(c):
            logits[i, j] = logits[i, j] / s


cdef void _gather_rows(const double[:, ::1] src, const long[::1] rows,
                       Py_ssize_t start, Py_ssize_t b, double[:, ::1] dst) noexcept nogil:
    cdef Py_ssize_t i, j, d = src.shape[1]
    for i in range(b):
        for j in range(d):
            dst[i, j] = src[rows[start + i], j]


cdef void _output_delta(double[:, ::1] probs, const long[::1] y, const long[::1] rows,
                        Py_ssize_t start, Py_ssize_t b, Py_ssize_t c,
                        const double[:, ::1] teacher, bint use_teacher, double gamma,
                        double[:, ::1] dz) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef long r
    for i in range(b):
        r = rows[start + i]
        if use_teacher:
            for j in range(c):
                dz[i, j] = (1.0 + gamma) * probs[i, j] - gamma * teacher[r, j]
        else:
            for j in range(c):
                dz[i, j] = probs[i, j]
        dz[i, y[r]] = dz[i, y[r]] - 1.0
        for j in range(c):
            dz[i, j] = dz[i, j] / b


cdef class _Workspace:
    """Reusable per-call buffers sized for one batch."""
    cdef list hs              # per-layer input buffers (post-activation)
    cdef object probs_arr, dz_arr, dh_arr, gw_arr, gb_arr
    cdef double[:, ::1] probs, dz, dh
    cdef double[::1] gw, gb
    cdef long[::1] w_off, b_off
    cdef Py_ssize_t n_layers

    def __init__(self, widths, Py_ssize_t cap):
        cdef Py_ssize_t l, max_w = max(widths)
        self.n_layers = len(widths) - 1
        self.hs = [np.empty((cap, widths[l]), dtype=np.float64)
                   for l in range(self.n_layers)]
        self.probs_arr = np.empty((cap, widths[len(widths) - 1]), dtype=np.float64)
        self.dz_arr = np.empty((cap, max_w), dtype=np.float64)
        self.dh_arr = np.empty((cap, max_w), dtype=np.float64)
        self.gw_arr = np.empty(max_w * max_w, dtype=np.float64)
        self.gb_arr = np.empty(max_w, dtype=np.float64)
        self.probs = self.probs_arr
        self.dz = self.dz_arr
        self.dh = self.dh_arr
        self.gw = self.gw_arr
        self.gb = self.gb_arr
        w_off = np.empty(self.n_layers, dtype=np.int64)
        b_off = np.empty(self.n_layers, dtype=np.int64)
        _layer_offsets(np.asarray(widths, dtype=np.int64), w_off, b_off)
        self.w_off = w_off
        self.b_off = b_off


cdef void _forward_all(const double[::1] params, const long[::1] widths, int act_kind,
                       _Workspace ws, Py_ssize_t b):
    cdef Py_ssize_t l
    cdef double[:, ::1] h_in, h_out
    for l in range(ws.n_layers):
        h_in = ws.hs[l]
        h_out = ws.hs[l + 1] if l + 1 < ws.n_layers else ws.probs
        _dense_forward(params, widths, ws.w_off, ws.b_off, act_kind,
                       h_in, h_out, l, b, l + 1 < ws.n_layers)
    _softmax_rows(ws.probs, b, widths[ws.n_layers])


cdef void _backward(const double[::1] params, const long[::1] widths, int act_kind,
                    _Workspace ws, Py_ssize_t b, double lr,
                    double[::1] out, bint grad_mode):
    # Consumes ws.dz (holding d loss / d logits). grad_mode: write raw
    # gradients into ``out``; otherwise apply the SGD update to ``out``
    # (which may alias ``params``; each layer's dH uses its pre-update
    # weights, computed before the write).
    cdef Py_ssize_t l, i, j, k
    cdef Py_ssize_t fan_in, fan_out
    cdef long wo, bo
    cdef double acc, hv
    cdef double[:, ::1] dz = ws.dz, dh = ws.dh, h
    cdef double[::1] gw = ws.gw, gb = ws.gb
    for l in range(ws.n_layers - 1, -1, -1):
        fan_in = widths[l]
        fan_out = widths[l + 1]
        wo = ws.w_off[l]
        bo = ws.b_off[l]
        h = ws.hs[l]
        for k in range(fan_in * fan_out):
            gw[k] = 0.0
        for j in range(fan_out):
            gb[j] = 0.0
        for i in range(b):
            for k in range(fan_in):
                hv = h[i, k]
                if hv != 0.0:
                    for j in range(fan_out):
                        gw[k * fan_out + j] = gw[k * fan_out + j] + hv * dz[i, j]
            for j in range(fan_out):
                gb[j] = gb[j] + dz[i, j]
        if l > 0:
            for i in range(b):
                for k in range(fan_in):
                    acc = 0.0
                    for j in range(fan_out):
                        acc += dz[i, j] * params[wo + k * fan_out + j]
                    dh[i, k] = acc
            if act_kind == 0:
                for i in range(b):
                    for k in range(fan_in):
                        dz[i, k] = dh[i, k] if h[i, k] > 0.0 else 0.0
            else:
                for i in range(b):
                    for k in range(fan_in):
                        dz[i, k] = dh[i, k] * (1.0 - h[i, k] * h[i, k])
        if grad_mode:
            for k in range(fan_in * fan_out):
                out[wo + k] = gw[k]
            for j in range(fan_out):
                out[bo + j] = gb[j]
        else:
            for k in range(fan_in * fan_out):
                out[wo + k] = out[wo + k] - lr * gw[k]
            for j in range(fan_out):
                out[bo + j] = out[bo + j] - lr * gb[j]


def forward_probs(const double[::1] params, widths, int act_kind, const double[:, ::1] X):
    """Class probabilities for every row of X (chunked, fixed order)."""
    cdef long[::1] w = np.asarray(widths, dtype=np.int64)
    cdef Py_ssize_t n = X.shape[0], c = w[w.shape[0] - 1]
    out = np.empty((n, c), dtype=np.float64)
    if n == 0:
        return out
    cdef Py_ssize_t chunk = 4096 if n > 4096 else n
    cdef _Workspace ws = _Workspace(list(widths), chunk)
    cdef double[:, ::1] out_v = out
    cdef double[:, ::1] h0 = ws.hs[0]
    cdef double[:, ::1] probs = ws.probs
    cdef Py_ssize_t start = 0, b, i, j
    while start < n:
        b = chunk if start + chunk <= n else n - start
        for i in range(b):
            for j in range(X.shape[1]):
                h0[i, j] = X[start + i, j]
        _forward_all(params, w, act_kind, ws, b)
        for i in range(b):
            for j in range(c):
                out_v[start + i, j] = probs[i, j]
        start += b
    return out


def train_epoch(double[::1] params, const unsigned char[::1] mask, widths, int act_kind,
                const double[:, ::1] X, const long[::1] y, const long[::1] perm,
                Py_ssize_t batch_size, double lr,
                teacher_probs, double gamma):
    """One epoch of minibatch SGD over ``perm``; updates params in place."""
    cdef long[::1] w = np.asarray(widths, dtype=np.int64)
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t c = w[w.shape[0] - 1]
    cdef _Workspace ws = _Workspace(list(widths), min(batch_size, n))
    cdef bint use_teacher = teacher_probs is not None and gamma != 0.0
    cdef const double[:, ::1] teacher = teacher_probs if use_teacher else X
    cdef bint fully_active = bool(np.asarray(mask).all())
    cdef const double[::1] params_ro = params
    cdef double[:, ::1] h0 = ws.hs[0]
    cdef Py_ssize_t start = 0, b, i
    cdef Py_ssize_t n_params = params.shape[0]
    while start < n:
        b = batch_size if start + batch_size <= n else n - start
        _gather_rows(X, perm, start, b, h0)
        _forward_all(params_ro, w, act_kind, ws, b)
        _output_delta(ws.probs, y, perm, start, b, c, teacher, use_teacher, gamma, ws.dz)
        _backward(params_ro, w, act_kind, ws, b, lr, params, False)
        if not fully_active:
            for i in range(n_params):
                if mask[i] == 0:
                    params[i] = 0.0
        start += b


def loss_and_grad(const double[::1] params, widths, int act_kind,
                  const double[:, ::1] X, const long[::1] y,
                  teacher_probs, double gamma):
    """Mean CE (+ gamma * smoothed KL to teacher) and gradient for one batch."""
    cdef long[::1] w = np.asarray(widths, dtype=np.int64)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t c = w[w.shape[0] - 1]
    cdef _Workspace ws = _Workspace(list(widths), n)
    cdef bint use_teacher = teacher_probs is not None and gamma != 0.0
    cdef const double[:, ::1] teacher = teacher_probs if use_teacher else X
    cdef double[:, ::1] h0 = ws.hs[0]
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(X.shape[1]):
            h0[i, j] = X[i, j]
    _forward_all(params, w, act_kind, ws, n)
    cdef double[:, ::1] probs = ws.probs
    cdef double loss = 0.0, qs_sum, qt_sum, kl, qs, qt
    for i in range(n):
        loss -= log(probs[i, y[i]])
    loss /= n
    if use_teacher:
        kl = 0.0
        for i in range(n):
            qs_sum = 0.0
            qt_sum = 0.0
            for j in range(c):
                qs_sum += _clip01(probs[i, j])
                qt_sum += _clip01(teacher[i, j])
            for j in range(c):
                qt = _clip01(teacher[i, j]) / qt_sum
                qs = _clip01(probs[i, j]) / qs_sum
                kl += qt * (log(qt) - log(qs))
        loss += gamma * kl / n
    rows = np.arange(n, dtype=np.int64)
    cdef long[::1] rows_v = rows
    grad = np.empty(params.shape[0], dtype=np.float64)
    cdef double[::1] grad_v = grad
    _output_delta(probs, y, rows_v, 0, n, c, teacher, use_teacher, gamma, ws.dz)
    _backward(params, w, act_kind, ws, n, 1.0, grad_v, True)
    return loss, grad
