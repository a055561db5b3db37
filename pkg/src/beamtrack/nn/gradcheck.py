from __future__ import annotations

from typing import Callable, Protocol, Sequence

import numpy as np

from .core import Layer, Param
from .layers import ReLU


class Differentiable(Protocol):
    def params(self) -> list[Param]: ...

    def loss_and_grad(self, sample) -> float: ...

    def loss(self, sample) -> float: ...


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def gradient_check(graph: Differentiable, sample, epsilon: float = 1e-5,
                   max_params: int = 10_000, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Every scalar parameter is perturbed, or a seeded random subset of
    ``max_params`` of them when the model is larger.
    """
    params = graph.params()
    for p in params:
        p.zero_grad()
    graph.loss_and_grad(sample)
    analytic = [p.grad.copy() for p in params]

    index = [(k, j) for k, p in enumerate(params) for j in range(p.size)]
    if len(index) > max_params:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(index), size=max_params, replace=False)
        index = [index[i] for i in np.sort(pick)]

    worst = 0.0
    for k, j in index:
        flat = params[k].value.reshape(-1)
        orig = flat[j]
        flat[j] = orig + epsilon
        up = graph.loss(sample)
        flat[j] = orig - epsilon
        down = graph.loss(sample)
        flat[j] = orig
        numeric = (up - down) / (2 * epsilon)
        worst = max(worst, relative_error(float(analytic[k].reshape(-1)[j]), numeric))
    return worst


def randomize_biases(params: Sequence[Param], seed: int = 0, scale: float = 0.1) -> None:
    """Redraw every bias from N(0, scale^2), in place.

    Zero-initialized biases put a unit whose receptive field is dead exactly on its
    ReLU kink, where central differences measure half the slope. A random bias moves
    the check to a generic point of parameter space.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        if p.name.endswith((".bias", ".b")):
            p.value[...] = rng.normal(0.0, scale, p.value.shape)


def _relus(obj):
    if isinstance(obj, ReLU):
        yield obj
    children = vars(obj).values() if isinstance(obj, Layer) or hasattr(obj, "layers") else ()
    for child in children:
        for item in child if isinstance(child, (list, tuple)) else (child,):
            if isinstance(item, Layer) or hasattr(item, "layers"):
                yield from _relus(item)


def kink_margin(root, run: Callable[[], object]) -> float:
    """Smallest |pre-activation| reaching any ReLU inside ``root`` while ``run()`` executes.

    Central differences are only meaningful when every unit stays on one side of
    its kink, so a margin well above the perturbation size marks a well-posed check.
    """
    margin = [np.inf]
    relus = list({id(r): r for r in _relus(root)}.values())

    def watch(relu):
        def forward(x):
            margin[0] = min(margin[0], float(np.abs(x).min()))
            return ReLU.forward(relu, x)
        return forward

    for r in relus:
        r.forward = watch(r)
    try:
        run()
    finally:
        for r in relus:
            del r.forward
    return margin[0]


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, epsilon: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (perturbed in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + epsilon
        up = f(x)
        flat[j] = orig - epsilon
        down = f(x)
        flat[j] = orig
        gflat[j] = (up - down) / (2 * epsilon)
    return g


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a, n = np.ravel(analytic), np.ravel(numeric)
    return max((relative_error(x, y) for x, y in zip(a, n)), default=0.0)


class LossGraph:
    """Adapts a layer and a loss into the ``Differentiable`` protocol."""

    def __init__(self, layer, loss_fn: Callable):
        self.layer = layer
        self.loss_fn = loss_fn

    def params(self) -> Sequence[Param]:
        return self.layer.params()

    def loss(self, sample) -> float:
        x, target = sample
        y = self.layer.forward(x)
        self.layer.clear_cache()
        return self.loss_fn(y, target)[0]

    def loss_and_grad(self, sample) -> float:
        x, target = sample
        y = self.layer.forward(x)
        loss, dy = self.loss_fn(y, target)
        self.layer.backward(dy)
        self.layer.clear_cache()
        return loss
