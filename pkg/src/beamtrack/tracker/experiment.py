"""In-memory generate -> label -> encode -> train -> evaluate runs."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..scene import PRESETS, Preset, generate_episodes, make_scenario
from .config import TrackerConfig
from .data import GRID_PRESETS, Labeler, SampleSet, encode_episode, label_episode
from .evaluate import EvalReport, evaluate_topk, topk_accuracy
from .train import TrainingOutcome, apply_split, train


def build_dataset(preset: Preset | str, n_episodes: int | None = None, seed: int = 1, mode: str = "lidar",
                  static: bool = False, window: int = 3, labeler: Labeler | None = None,
                  timings: dict | None = None) -> SampleSet:
    preset = PRESETS[preset] if isinstance(preset, str) else preset
    n = preset.n_episodes if n_episodes is None else n_episodes
    labeler = labeler or Labeler.default()
    t = time.perf_counter()
    episodes = generate_episodes(make_scenario(preset.kind), preset, n, seed, static=static)
    t_gen = time.perf_counter()
    labels = {
        e.episode_id: {r: [None if x is None else x[0] for x in seq] for r, seq in label_episode(e, labeler).items()}
        for e in episodes
    }
    t_lab = time.perf_counter()
    encoded = {e.episode_id: encode_episode(e, mode, GRID_PRESETS[preset.kind]) for e in episodes}
    t_enc = time.perf_counter()
    if timings is not None:
        timings.update(generate=t_gen - t, label=t_lab - t_gen, encode=t_enc - t_lab)
    return SampleSet.assemble(encoded, labels, window, mode)


@dataclass
class ExperimentResult:
    outcome: TrainingOutcome
    test: EvalReport
    val_top1: float
    val_top1_no_history: float
    timings: dict = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return sum(self.timings.values())


def run_experiment(samples: SampleSet, config: TrackerConfig, with_selection: bool = True,
                   closed_loop: bool = False, timings: dict | None = None) -> ExperimentResult:
    """Train on the episode split of ``samples`` and report on its test episodes."""
    timings = dict(timings or {})
    t = time.perf_counter()
    outcome = train(samples, config, with_selection=with_selection)
    timings["train"] = time.perf_counter() - t
    t = time.perf_counter()
    _, val_set, test_set = apply_split(samples, outcome.split)
    tracker = outcome.tracker.model
    selection = outcome.selection.model if outcome.selection is not None else None
    report = evaluate_topk(tracker, selection, test_set, config.topk, closed_loop=closed_loop)
    x_val = val_set.inputs()
    with_hist = topk_accuracy(tracker.predict(x_val, val_set.prev), val_set.labels, [1])[1]
    no_hist = topk_accuracy(tracker.predict(x_val, val_set.prev, zero_history=True), val_set.labels, [1])[1]
    timings["eval"] = time.perf_counter() - t
    return ExperimentResult(outcome, report, with_hist, no_hist, timings)
