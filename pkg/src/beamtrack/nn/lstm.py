"""LSTM cell and sequence layer with backpropagation through time.

Gate order in the stacked pre-activations is (input, forget, candidate, output).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .core import Layer, Param, check_finite, he_uniform


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class LSTMParams:
    w_x: np.ndarray  # (D, 4H)
    w_h: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]


def lstm_step(x, h, c, p: LSTMParams):
    """One step. ``x`` is (D,) or (B, D); returns ``(h', c', cache)``."""
    H = p.hidden
    if x.shape[-1] != p.w_x.shape[0] or h.shape[-1] != H or c.shape != h.shape:
        raise ShapeError(f"lstm_step: x {x.shape}, h {h.shape}, c {c.shape} vs w_x {p.w_x.shape}")
    z = x @ p.w_x + h @ p.w_h + p.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H :])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (x, h, c, i, f, g, o, tc)


def lstm_step_backward(dh_new, dc_new, cache, p: LSTMParams):
    """Returns (dx, dh, dc, dw_x, dw_h, db) for one step."""
    x, h, c, i, f, g, o, tc = cache
    do = dh_new * tc
    dc = dc_new + dh_new * o * (1.0 - tc * tc)
    di = dc * g
    dg = dc * i
    df = dc * c
    dc_prev = dc * f
    dz = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1
    )
    if dz.ndim == 1:
        dw_x = np.outer(x, dz)
        dw_h = np.outer(h, dz)
        db = dz
    else:
        dw_x = x.T @ dz
        dw_h = h.T @ dz
        db = dz.sum(axis=0)
    dx = dz @ p.w_x.T
    dh = dz @ p.w_h.T
    return dx, dh, dc_prev, dw_x, dw_h, db


class LSTM(Layer):
    """Runs over (B, T, D) from zero state and returns the last hidden state (B, H)."""

    def __init__(self, n_in: int, hidden: int, rng=None, name: str = "lstm", forget_bias: float = 1.0):
        self.n_in, self.hidden = n_in, hidden
        if rng is None:
            wx, wh = np.zeros((n_in, 4 * hidden)), np.zeros((hidden, 4 * hidden))
        else:
            wx = he_uniform(rng, (n_in, 4 * hidden), n_in) / np.sqrt(2.0)
            wh = he_uniform(rng, (hidden, 4 * hidden), hidden) / np.sqrt(2.0)
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = forget_bias
        self.w_x = Param(f"{name}.w_x", wx)
        self.w_h = Param(f"{name}.w_h", wh)
        self.b = Param(f"{name}.b", b)
        self._cache = None

    def params(self):
        return [self.w_x, self.w_h, self.b]

    def _p(self) -> LSTMParams:
        return LSTMParams(self.w_x.value, self.w_h.value, self.b.value)

    def forward(self, xs):
        if xs.ndim != 3 or xs.shape[2] != self.n_in:
            raise ShapeError(f"LSTM expects (B, T, {self.n_in}), got {xs.shape}")
        B, T, _ = xs.shape
        p = self._p()
        h = np.zeros((B, self.hidden))
        c = np.zeros((B, self.hidden))
        caches = []
        for t in range(T):
            h, c, cache = lstm_step(xs[:, t], h, c, p)
            caches.append(cache)
        self._cache = (caches, xs.shape)
        return check_finite(h, self.w_x.name)

    def backward(self, dh):
        caches, shape = self._cache
        p = self._p()
        dxs = np.zeros(shape)
        dc = np.zeros_like(dh)
        for t in reversed(range(shape[1])):
            dx, dh, dc, dwx, dwh, db = lstm_step_backward(dh, dc, caches[t], p)
            dxs[:, t] = dx
            self.w_x.grad += dwx
            self.w_h.grad += dwh
            self.b.grad += db
        return dxs

    def output_shape(self, s):
        T, D = s
        if D != self.n_in:
            raise ShapeError(f"LSTM expects {self.n_in} features per step, got {D}")
        return (self.hidden,)

    def describe(self):
        return {"type": "LSTM", "n_in": self.n_in, "hidden": self.hidden}
