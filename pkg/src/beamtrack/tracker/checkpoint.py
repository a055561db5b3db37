"""Checkpoint directories: ``manifest.json`` plus one tensor blob per named parameter.

Layout::

    CKPT/manifest.json
    CKPT/tracker/<param name>.bin
    CKPT/selection/<param name>.bin
    CKPT/train_log.csv
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..tensorio import read_blob, write_blob
from .config import TrackerConfig
from .model import HybridTracker, SelectionModel, topology
from .train import TrainingOutcome

MANIFEST = "manifest.json"
LOG_FILE = "train_log.csv"


def _model_entry(name: str, model, out: Path) -> dict:
    (out / name).mkdir(parents=True, exist_ok=True)
    entries = []
    for p in model.params():
        rel = f"{name}/{p.name}.bin"
        write_blob(out / rel, p.value)
        entries.append({"name": p.name, "shape": list(p.shape), "file": rel})
    return {"topology": topology(model), "params": entries}


def save_checkpoint(out_dir, outcome: TrainingOutcome, extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = {"tracker": _model_entry("tracker", outcome.tracker.model, out)}
    models["tracker"]["best_epoch"] = outcome.tracker.best_epoch
    if outcome.selection is not None:
        models["selection"] = _model_entry("selection", outcome.selection.model, out)
        models["selection"]["best_epoch"] = outcome.selection.best_epoch
    manifest = {
        "format": 1,
        "config": outcome.config.to_dict(),
        "input_shape": list(outcome.input_shape),
        "split": outcome.split.as_dict(),
        "models": models,
        **(extra or {}),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_train_log(out / LOG_FILE, outcome)


def write_train_log(path, outcome: TrainingOutcome) -> None:
    """CSV: model, epoch, train_loss, val_top1 (wall-clock time is left out so reruns match byte for byte)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["model", "epoch", "train_loss", "val_top1"])
        for name, res in (("tracker", outcome.tracker), ("selection", outcome.selection)):
            if res is None:
                continue
            for rec in res.history:
                w.writerow([name, rec.epoch, format(rec.train_loss, ".17g"), format(rec.val_top1, ".17g")])


def _load_params(model, entry: dict, root: Path) -> None:
    by_name = {p.name: p for p in model.params()}
    if set(by_name) != {e["name"] for e in entry["params"]}:
        raise ShapeError("checkpoint parameters do not match the model")
    for e in entry["params"]:
        value = read_blob(root / e["file"])
        p = by_name[e["name"]]
        if value.shape != p.shape:
            raise ShapeError(f"{e['name']}: checkpoint shape {value.shape} != model shape {p.shape}")
        p.value[...] = value


def load_checkpoint(ckpt_dir):
    """Returns (manifest, tracker, selection or None) with parameters restored."""
    root = Path(ckpt_dir)
    manifest = json.loads((root / MANIFEST).read_text())
    config = TrackerConfig.from_dict(manifest["config"])
    shape = tuple(manifest["input_shape"])
    tracker = HybridTracker(config, shape)
    _load_params(tracker, manifest["models"]["tracker"], root)
    selection = None
    if "selection" in manifest["models"]:
        selection = SelectionModel(config, shape)
        _load_params(selection, manifest["models"]["selection"], root)
    return manifest, tracker, selection


def parameters_equal(a, b) -> bool:
    return all(np.array_equal(p.value, q.value) for p, q in zip(a.params(), b.params()))
