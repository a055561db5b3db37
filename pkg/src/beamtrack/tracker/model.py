"""Hybrid ResNet-CNN + LSTM beam tracker and the CNN-only selection ablation."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn import LSTM, Conv2d, Dense, GlobalAvgPool, ReLU, ResidualBlock, Sequential, softmax_cross_entropy
from ..nn.core import check_finite
from .config import TrackerConfig
from .data import INPUT_SCALE, MARKERS


def coordinate_planes(h: int, w: int) -> np.ndarray:
    """Two fixed channels holding each cell's normalized row and column in [-1, 1]."""
    rows = np.linspace(-1.0, 1.0, h) if h > 1 else np.zeros(1)
    cols = np.linspace(-1.0, 1.0, w) if w > 1 else np.zeros(1)
    R, C = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([R, C])


def marker_planes(x: np.ndarray, codes, coords: np.ndarray) -> np.ndarray:
    """Per marker code, two channels with each cell's (row, column) offset from the marked cell.

    ``x`` is (B, C, H, W); the first matching cell in row-major order counts and a
    missing marker leaves the plain coordinates. Output is (B, 2 * len(codes), H, W).
    """
    B = x.shape[0]
    flat_coords = coords.reshape(2, -1)
    planes = []
    for code in codes:
        hit = (x == code).any(axis=1).reshape(B, -1)
        at = flat_coords[:, hit.argmax(axis=1)] * hit.any(axis=1)  # (2, B)
        planes.append(coords[None] - at.T[:, :, None, None])
    return np.concatenate(planes, axis=1)


def build_cnn(config: TrackerConfig, input_shape, rng) -> Sequential:
    c_in = input_shape[0] + (4 if config.coord_channels else 0)
    layers = [
        Conv2d(c_in, config.stem_channels, 3, config.stem_stride, 1, rng, "stem", input_grad=False),
        ReLU(),
    ]
    c = config.stem_channels
    for i, (c_out, stride) in enumerate(zip(config.block_channels, config.block_strides)):
        layers += [ResidualBlock(c, c_out, stride, rng, f"block{i + 1}"), ReLU()]
        c = c_out
    layers += [GlobalAvgPool(), Dense(c, config.feature_dim, rng, "feature"), ReLU()]
    return Sequential(layers)


class _Base:
    """Shared input handling; subclasses define ``layers`` and the forward graph."""

    def __init__(self, config: TrackerConfig, input_shape):
        self.config = config
        self.input_shape = tuple(int(s) for s in input_shape)
        if len(self.input_shape) != 3:
            raise ShapeError(f"scene tensors must be (C, H, W), got {self.input_shape}")
        self._coords = coordinate_planes(*self.input_shape[1:]) if config.coord_channels else None

    def prepare(self, scenes: np.ndarray) -> np.ndarray:
        x = np.asarray(scenes, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"expected scene tensors of shape {self.input_shape}, got {x.shape[1:]}")
        if self._coords is not None:
            codes = [c / INPUT_SCALE[self.config.input_mode] for c in MARKERS[self.config.input_mode]]
            x = np.concatenate([x, marker_planes(x, codes, self._coords)], axis=1)
        return x

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def clear_cache(self):
        for layer in self.layers:
            layer.clear_cache()

    def loss(self, batch) -> float:
        scenes, prev, labels = batch
        logits = self.forward(scenes, prev)
        self.clear_cache()
        return softmax_cross_entropy(logits, np.atleast_1d(labels))[0]

    def loss_and_grad(self, batch) -> float:
        scenes, prev, labels = batch
        logits = self.forward(scenes, prev)
        loss, dlogits = softmax_cross_entropy(logits, np.atleast_1d(labels))
        self.backward(dlogits)
        self.clear_cache()
        return loss

    def predict(self, scenes, prev, batch_size: int = 256, **kw) -> np.ndarray:
        out = []
        for i in range(0, len(scenes), batch_size):
            p = None if prev is None else prev[i : i + batch_size]
            out.append(self.forward(scenes[i : i + batch_size], p, **kw))
            self.clear_cache()
        return np.concatenate(out) if out else np.zeros((0, self.config.n_beams))


class HybridTracker(_Base):
    """CNN features concatenated with one-hot beam history, fed step by step to an LSTM.

    With ``zero_head`` the final dense layer starts at zero, giving uniform logits.
    """

    def __init__(self, config: TrackerConfig, input_shape, rng=None, zero_head: bool = False):
        super().__init__(config, input_shape)
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.cnn = build_cnn(config, self.input_shape, rng)
        self.cnn.output_shape(self.prepare(np.zeros(self.input_shape)).shape[1:])
        self.lstm = LSTM(config.feature_dim + config.n_beams, config.lstm_hidden, rng, "lstm")
        self.head = Dense(config.lstm_hidden, config.n_beams, rng, "head", zero_init=zero_head)
        self.layers = [self.cnn, self.lstm, self.head]

    def history_onehot(self, prev, batch: int) -> np.ndarray:
        W, M = self.config.window, self.config.n_beams
        onehot = np.zeros((batch, W, M))
        if prev is None:
            return onehot
        prev = np.asarray(prev, dtype=np.int64).reshape(batch, -1)
        if prev.shape[1] != W:
            raise ShapeError(f"expected {W} previous beams, got {prev.shape[1]}")
        if prev.min() < 0 or prev.max() >= M:
            raise ShapeError("previous beam index out of range")
        rows = np.repeat(np.arange(batch), W)
        onehot[rows, np.tile(np.arange(W), batch), prev.reshape(-1)] = 1.0
        return onehot

    def forward(self, scenes, prev, zero_history: bool = False) -> np.ndarray:
        x = self.prepare(scenes)
        B = x.shape[0]
        feat = self.cnn.forward(x)
        hist = self.history_onehot(None if zero_history else prev, B)
        seq = np.concatenate([np.repeat(feat[:, None, :], self.config.window, axis=1), hist], axis=2)
        h = self.lstm.forward(seq)
        return check_finite(self.head.forward(h), "logits")

    def backward(self, dlogits):
        dh = self.head.backward(dlogits)
        dseq = self.lstm.backward(dh)
        dfeat = dseq[:, :, : self.config.feature_dim].sum(axis=1)
        self.cnn.backward(dfeat)


class SelectionModel(_Base):
    """CNN features -> dense -> logits; ignores beam history."""

    def __init__(self, config: TrackerConfig, input_shape, rng=None):
        super().__init__(config, input_shape)
        rng = np.random.default_rng(config.seed + 1) if rng is None else rng
        self.cnn = build_cnn(config, self.input_shape, rng)
        self.head = Dense(config.feature_dim, config.n_beams, rng, "head")
        self.layers = [self.cnn, self.head]

    def forward(self, scenes, prev=None, **_) -> np.ndarray:
        return check_finite(self.head.forward(self.cnn.forward(self.prepare(scenes))), "logits")

    def backward(self, dlogits):
        self.cnn.backward(self.head.backward(dlogits))


def topology(model) -> list[dict]:
    return [layer.describe() for layer in model.layers]
