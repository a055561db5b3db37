"""Episode-level splitting and the Adam training loop."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import DomainError
from ..nn import adam_update
from .config import TrackerConfig
from .data import SampleSet
from .evaluate import topk_accuracy
from .model import HybridTracker, SelectionModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Split:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise DomainError("an episode appears in more than one split")

    def as_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test)}


def split_episodes(episode_ids, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> Split:
    """Seeded shuffle of unique episode ids, cut into train/val/test; every part must be non-empty."""
    ids = np.unique(np.asarray(list(episode_ids), dtype=np.int64))
    ids = ids[np.random.default_rng(seed).permutation(len(ids))]
    n_train = int(round(fractions[0] * len(ids)))
    n_val = int(round(fractions[1] * len(ids)))
    parts = ids[:n_train], ids[n_train : n_train + n_val], ids[n_train + n_val :]
    for name, part in zip(("train", "validation", "test"), parts):
        if len(part) == 0:
            raise DomainError(f"empty {name} split from {len(ids)} episodes")
    return Split(*(tuple(sorted(int(i) for i in p)) for p in parts))


def apply_split(samples: SampleSet, split: Split) -> tuple[SampleSet, SampleSet, SampleSet]:
    sets = tuple(samples.subset(np.isin(samples.episode_ids, ids)) for ids in (split.train, split.val, split.test))
    for name, s in zip(("train", "validation", "test"), sets):
        if len(s) == 0:
            raise DomainError(f"{name} split holds no samples")
    return sets


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_top1: float
    seconds: float


@dataclass
class TrainResult:
    model: object
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_top1(self) -> float:
        return self.history[self.best_epoch].val_top1


def fit(model, train_set: SampleSet, val_set: SampleSet, config: TrackerConfig,
        on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Minimize cross-entropy with Adam; the model ends holding its best-validation parameters."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise DomainError("training and validation sets must be non-empty")
    params = model.params()
    best = [p.value.copy() for p in params]
    result = TrainResult(model)
    x_val = val_set.inputs()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
        losses = []
        for i in range(0, len(order), config.batch_size):
            b = order[i : i + config.batch_size]
            for p in params:
                p.zero_grad()
            losses.append(model.loss_and_grad((train_set.inputs(b), train_set.prev[b], train_set.labels[b])))
            adam_update(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        val_top1 = topk_accuracy(model.predict(x_val, val_set.prev), val_set.labels, [1])[1]
        rec = EpochRecord(epoch, float(np.mean(losses)), val_top1, time.perf_counter() - t0)
        result.history.append(rec)
        log.info("%s epoch %d loss %.4f val top-1 %.4f", type(model).__name__, epoch, rec.train_loss, val_top1)
        if on_epoch is not None:
            on_epoch(rec)
        if result.best_epoch < 0 or val_top1 > result.history[result.best_epoch].val_top1:
            result.best_epoch = epoch
            best = [p.value.copy() for p in params]
    for p, v in zip(params, best):
        p.value[...] = v
    return result


@dataclass
class TrainingOutcome:
    config: TrackerConfig
    split: Split
    tracker: TrainResult
    selection: TrainResult | None
    input_shape: tuple[int, ...]


def train(samples: SampleSet, config: TrackerConfig, with_selection: bool = True,
          on_epoch: Callable[[str, EpochRecord], None] | None = None) -> TrainingOutcome:
    """Split by episode, then train the hybrid tracker and (optionally) the selection ablation."""
    if samples.mode != config.input_mode:
        raise DomainError(f"samples are {samples.mode!r} but config asks for {config.input_mode!r}")
    split = split_episodes(samples.episode_ids, config.split, config.seed)
    train_set, val_set, _ = apply_split(samples, split)
    shape = train_set.input_shape

    def hook(name):
        return None if on_epoch is None else (lambda rec: on_epoch(name, rec))

    tracker = fit(HybridTracker(config, shape), train_set, val_set, config, hook("tracker"))
    selection = None
    if with_selection:
        selection = fit(SelectionModel(config, shape), train_set, val_set, config, hook("selection"))
    return TrainingOutcome(config, split, tracker, selection, shape)
