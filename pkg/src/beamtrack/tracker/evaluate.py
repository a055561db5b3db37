"""Top-K evaluation of the tracker, the selection ablation and the previous-beam baseline."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DomainError, ShapeError
from .data import SampleSet


def baseline_previous(last_beam: int, n_beams: int = 64) -> list[int]:
    """Rank the last beam first, then its neighbours -1, +1, -2, +2, ... (modular, deduplicated)."""
    if not 0 <= last_beam < n_beams:
        raise DomainError(f"beam {last_beam} outside [0, {n_beams})")
    order, seen = [last_beam], {last_beam}
    for k in range(1, n_beams):
        for b in ((last_beam - k) % n_beams, (last_beam + k) % n_beams):
            if b not in seen:
                seen.add(b)
                order.append(b)
    return order


def baseline_scores(prev: np.ndarray, n_beams: int) -> np.ndarray:
    """Scores whose descending order reproduces :func:`baseline_previous` for each row's last beam."""
    last = np.asarray(prev)[:, -1]
    scores = np.empty((len(last), n_beams))
    for b in np.unique(last):
        s = np.empty(n_beams)
        s[baseline_previous(int(b), n_beams)] = -np.arange(n_beams, dtype=float)
        scores[last == b] = s
    return scores


def rank_positions(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """0-based rank of each label when scores are sorted descending, ties broken by lower index."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"scores {scores.shape} do not match {labels.shape[0]} labels")
    own = scores[np.arange(len(labels)), labels][:, None]
    above = (scores > own).sum(axis=1)
    idx = np.arange(scores.shape[1])[None, :]
    tied_before = ((scores == own) & (idx < labels[:, None])).sum(axis=1)
    return above + tied_before


def topk_accuracy(scores: np.ndarray, labels: np.ndarray, ks: Sequence[int]) -> dict[int, float]:
    pos = rank_positions(scores, labels)
    if len(pos) == 0:
        return {int(k): float("nan") for k in ks}
    return {int(k): float(np.mean(pos < k)) for k in ks}


def evaluation_ks(ks: Sequence[int], n_beams: int) -> tuple[int, ...]:
    """Requested K values clipped to M, always including M itself."""
    out = sorted({int(k) for k in ks if 1 <= int(k) <= n_beams} | {n_beams})
    return tuple(out)


@dataclass
class EvalReport:
    """Per-model top-K accuracy; ``rows[model][K]`` is a fraction in [0, 1]."""

    ks: tuple[int, ...]
    rows: dict[str, dict[int, float]] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def add(self, model: str, scores: np.ndarray, labels: np.ndarray) -> None:
        self.rows[model] = topk_accuracy(scores, labels, self.ks)
        self.counts[model] = int(len(labels))

    def top1(self, model: str) -> float:
        return self.rows[model][1]

    def to_rows(self) -> list[dict]:
        return [
            {"model": m, "K": k, "accuracy": acc, "n": self.counts[m]}
            for m, accs in self.rows.items()
            for k, acc in accs.items()
        ]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["model", "K", "accuracy", "n"], lineterminator="\n")
            w.writeheader()
            for row in self.to_rows():
                w.writerow({**row, "accuracy": format(row["accuracy"], ".17g")})

    @classmethod
    def read_csv(cls, path) -> "EvalReport":
        rows: dict[str, dict[int, float]] = {}
        counts: dict[str, int] = {}
        with open(path, newline="") as f:
            for r in csv.DictReader(f):
                rows.setdefault(r["model"], {})[int(r["K"])] = float(r["accuracy"])
                counts[r["model"]] = int(r["n"])
        ks = tuple(sorted({k for accs in rows.values() for k in accs}))
        return cls(ks, rows, counts)

    def format(self) -> str:
        head = "model".ljust(22) + "".join(f"K={k}".rjust(8) for k in self.ks)
        lines = [head]
        for m, accs in self.rows.items():
            lines.append(m.ljust(22) + "".join(f"{accs[k]:8.3f}" for k in self.ks))
        return "\n".join(lines)


def closed_loop_scores(model, samples: SampleSet, batch_size: int = 256) -> np.ndarray:
    """Logits when the history after each sequence's first window comes from the model's own top-1.

    Scenes of one (episode, receiver) sequence are visited in order; a
    previous beam is replaced by the prediction made at that scene when
    one exists, otherwise the ground truth from the sample is kept.
    """
    n = len(samples)
    out = np.zeros((n, model.config.n_beams))
    W = samples.prev.shape[1]
    predicted: dict[tuple[int, int, int], int] = {}
    for s in np.unique(samples.scene_ids):
        idx = np.flatnonzero(samples.scene_ids == s)
        prev = samples.prev[idx].copy()
        for row, i in enumerate(idx):
            key = (int(samples.episode_ids[i]), int(samples.receiver_ids[i]))
            for j in range(W):
                t = int(s) - W + j
                prev[row, j] = predicted.get(key + (t,), prev[row, j])
        logits = model.predict(samples.inputs(idx), prev, batch_size)
        out[idx] = logits
        top = np.argmax(logits, axis=1)  # ties go to the lower index
        for row, i in enumerate(idx):
            predicted[(int(samples.episode_ids[i]), int(samples.receiver_ids[i]), int(s))] = int(top[row])
    return out


def evaluate_topk(tracker, selection, samples: SampleSet, ks: Sequence[int] = tuple(range(1, 11)),
                  closed_loop: bool = False, batch_size: int = 256) -> EvalReport:
    """Rows ``tracker``, ``selection`` (if given), ``baseline`` and optionally ``tracker_closed_loop``."""
    M = tracker.config.n_beams
    report = EvalReport(evaluation_ks(ks, M))
    x = samples.inputs()
    report.add("tracker", tracker.predict(x, samples.prev, batch_size), samples.labels)
    if selection is not None:
        report.add("selection", selection.predict(x, None, batch_size), samples.labels)
    report.add("baseline", baseline_scores(samples.prev, M), samples.labels)
    if closed_loop:
        report.add("tracker_closed_loop", closed_loop_scores(tracker, samples, batch_size), samples.labels)
    return report
