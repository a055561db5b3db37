"""Convolution, residual, pooling and dense layers with manual backprop.

All tensors are float64 and batch-first: images are (B, C, H, W).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .core import DTYPE, Layer, Param, check_finite, he_uniform


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    """Patch matrix of shape (B*Ho*Wo, k*k*C); columns are ordered (ki, kj, channel)."""
    B, C, H, W = x.shape
    Ho, Wo = conv_output_size(H, k, stride, pad), conv_output_size(W, k, stride, pad)
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"kernel {k} does not fit input {H}x{W} with pad {pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, : stride * (Ho - 1) + 1 : stride, : stride * (Wo - 1) + 1 : stride]
    # (B, C, Ho, Wo, k, k) -> (B*Ho*Wo, k*k*C)
    cols = win.transpose(0, 2, 3, 4, 5, 1).reshape(B * Ho * Wo, k * k * C)
    return cols, Ho, Wo


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int, Ho: int, Wo: int) -> np.ndarray:
    """Scatter-add column gradients back to the image. ``dcols`` columns are ordered (k, k, C)."""
    B, C, H, W = x_shape
    d = dcols.reshape(B, Ho, Wo, k, k, C)
    dxp = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += d[:, :, :, i, j]
    dxp = dxp.transpose(0, 3, 1, 2)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(dxp)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, pad: int = 0):
    """Cross-correlation. ``x`` is (C, H, W) or (B, C, H, W); weight (O, C, k, k).

    Returns ``(y, cache)``; pass the cache to :func:`conv2d_backward`.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d expects (B,C,H,W) input and (O,C,k,k) weight, got {x.shape}, {weight.shape}")
    O, C, k, _ = weight.shape
    if x.shape[1] != C or bias.shape != (O,):
        raise ShapeError(f"input has {x.shape[1]} channels, weight expects {C}; bias shape {bias.shape}")
    B = x.shape[0]
    cols, Ho, Wo = _im2col(x, k, stride, pad)
    y = cols @ weight.transpose(0, 2, 3, 1).reshape(O, -1).T + bias
    y = y.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    cache = (cols, x.shape, weight, stride, pad, Ho, Wo, single)
    return (y[0] if single else np.ascontiguousarray(y)), cache


def conv2d_backward(dy: np.ndarray, cache, input_grad: bool = True):
    """Gradients (dx, dweight, dbias) for :func:`conv2d`; ``dx`` is None when ``input_grad`` is False."""
    cols, x_shape, weight, stride, pad, Ho, Wo, single = cache
    if single:
        dy = dy[None]
    O, C, k, _ = weight.shape
    dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, O)
    dw = (dy_mat.T @ cols).reshape(O, k, k, C).transpose(0, 3, 1, 2)
    db = dy_mat.sum(axis=0)
    if not input_grad:
        return None, dw, db
    dcols = dy_mat @ weight.transpose(0, 2, 3, 1).reshape(O, -1)
    dx = _col2im(dcols, x_shape, k, stride, pad, Ho, Wo)
    return (dx[0] if single else dx), dw, db


class Conv2d(Layer):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1, pad: int = 0,
                 rng: np.random.Generator | None = None, name: str = "conv", zero_init: bool = False,
                 input_grad: bool = True):
        # input_grad=False skips dx for a layer that reads raw data (returns None from backward)
        self.input_grad = input_grad
        self.c_in, self.c_out, self.kernel, self.stride, self.pad = c_in, c_out, kernel, stride, pad
        shape = (c_out, c_in, kernel, kernel)
        if zero_init or rng is None:
            w = np.zeros(shape)
        else:
            w = he_uniform(rng, shape, c_in * kernel * kernel)
        self.weight = Param(f"{name}.weight", w)
        self.bias = Param(f"{name}.bias", np.zeros(c_out))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        y, self._cache = conv2d(x, self.weight.value, self.bias.value, self.stride, self.pad)
        return check_finite(y, self.weight.name)

    def backward(self, dy):
        dx, dw, db = conv2d_backward(dy, self._cache, self.input_grad)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, s):
        C, H, W = s
        if C != self.c_in:
            raise ShapeError(f"{self.weight.name}: expected {self.c_in} channels, got {C}")
        return (self.c_out, conv_output_size(H, self.kernel, self.stride, self.pad),
                conv_output_size(W, self.kernel, self.stride, self.pad))

    def describe(self):
        return {"type": "Conv2d", "c_in": self.c_in, "c_out": self.c_out, "kernel": self.kernel,
                "stride": self.stride, "pad": self.pad}


class ReLU(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._cache

    def output_shape(self, s):
        return s


class ResidualBlock(Layer):
    """conv3x3 -> ReLU -> conv3x3, plus an identity (or 1x1 projection) shortcut.

    No activation after the sum, so a zero inner path makes the block the
    identity map when the shortcut is the identity.
    """

    def __init__(self, c_in: int, c_out: int, stride: int = 1, rng=None, name: str = "block",
                 zero_inner: bool = False):
        self.c_in, self.c_out, self.stride = c_in, c_out, stride
        self.conv1 = Conv2d(c_in, c_out, 3, stride, 1, rng, f"{name}.conv1", zero_init=zero_inner)
        self.relu = ReLU()
        self.conv2 = Conv2d(c_out, c_out, 3, 1, 1, rng, f"{name}.conv2", zero_init=zero_inner)
        self.shortcut = None
        if c_in != c_out or stride != 1:
            self.shortcut = Conv2d(c_in, c_out, 1, stride, 0, rng, f"{name}.proj")

    def params(self):
        ps = self.conv1.params() + self.conv2.params()
        if self.shortcut is not None:
            ps += self.shortcut.params()
        return ps

    def forward(self, x):
        inner = self.conv2.forward(self.relu.forward(self.conv1.forward(x)))
        skip = x if self.shortcut is None else self.shortcut.forward(x)
        return inner + skip

    def backward(self, dy):
        dx = self.conv1.backward(self.relu.backward(self.conv2.backward(dy)))
        if self.shortcut is None:
            return dx + dy
        return dx + self.shortcut.backward(dy)

    def clear_cache(self):
        for layer in (self.conv1, self.relu, self.conv2, self.shortcut):
            if layer is not None:
                layer.clear_cache()

    def output_shape(self, s):
        out = self.conv2.output_shape(self.conv1.output_shape(s))
        if self.shortcut is not None and self.shortcut.output_shape(s) != out:
            raise ShapeError("shortcut and inner path disagree")
        if self.shortcut is None and out != tuple(s):
            raise ShapeError("identity shortcut needs matching shapes")
        return out

    def describe(self):
        return {"type": "ResidualBlock", "c_in": self.c_in, "c_out": self.c_out, "stride": self.stride}


class GlobalAvgPool(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x):
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        B, C, H, W = self._cache
        return np.broadcast_to(dy[:, :, None, None] / (H * W), self._cache).copy()

    def output_shape(self, s):
        return (s[0],)


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng=None, name: str = "dense", zero_init: bool = False):
        self.n_in, self.n_out = n_in, n_out
        w = np.zeros((n_in, n_out)) if (zero_init or rng is None) else he_uniform(rng, (n_in, n_out), n_in)
        self.weight = Param(f"{name}.weight", w)
        self.bias = Param(f"{name}.bias", np.zeros(n_out))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.weight.name}: expected {self.n_in} features, got {x.shape[-1]}")
        self._cache = x
        return check_finite(x @ self.weight.value + self.bias.value, self.weight.name)

    def backward(self, dy):
        x = self._cache
        self.weight.grad += x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value.T

    def output_shape(self, s):
        if tuple(s) != (self.n_in,):
            raise ShapeError(f"{self.weight.name}: expected ({self.n_in},), got {s}")
        return (self.n_out,)

    def describe(self):
        return {"type": "Dense", "n_in": self.n_in, "n_out": self.n_out}


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def clear_cache(self):
        for layer in self.layers:
            layer.clear_cache()

    def output_shape(self, s):
        for layer in self.layers:
            s = layer.output_shape(s)
        return s

    def describe(self):
        return {"type": "Sequential", "layers": [layer.describe() for layer in self.layers]}
