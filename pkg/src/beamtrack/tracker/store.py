"""On-disk encoded tensors and label tables.

An encoded directory has ``index.json`` and one int8 blob per episode of
shape (receivers, scenes, *grid). ``labels.csv`` has one row per labeled
scene: episode_id, receiver_id, scene_id, beam_index, best_gain. Outage
scenes have no row.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..encoders import GridSpec
from ..errors import DomainError
from ..tensorio import read_blob, write_blob
from .data import GRID_PRESETS, GridPreset, SampleSet

INDEX_FILE = "index.json"
LABEL_FILE = "labels.csv"
LABEL_COLUMNS = ["episode_id", "receiver_id", "scene_id", "beam_index", "best_gain"]


def grid_preset_from_file(path) -> GridPreset:
    """JSON with ``voxel`` and ``coord`` objects ({origin, cell_size, dims}) plus optional LIDAR keys."""
    d = json.loads(Path(path).read_text())
    try:
        voxel = GridSpec(tuple(d["voxel"]["origin"]), d["voxel"]["cell_size"], tuple(d["voxel"]["dims"]))
        coord = GridSpec(tuple(d["coord"]["origin"]), d["coord"]["cell_size"], tuple(d["coord"]["dims"]))
    except KeyError as e:
        raise DomainError(f"grid config {path} is missing {e}") from None
    extra = {k: d[k] for k in ("lidar_azimuths", "lidar_elevations", "lidar_range") if k in d}
    return GridPreset(voxel, coord, **extra)


def resolve_grid(spec: str, kind: str) -> GridPreset:
    """``auto`` picks the scenario's preset; a preset name or a JSON file path also works."""
    if spec == "auto":
        return GRID_PRESETS[kind]
    if spec in GRID_PRESETS:
        return GRID_PRESETS[spec]
    return grid_preset_from_file(spec)


def _grid_dict(g: GridSpec) -> dict:
    d = asdict(g)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def write_encoded(out_dir, mode: str, preset: GridPreset, encoded: dict[int, np.ndarray],
                  receivers: dict[int, tuple[int, ...]]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ep in sorted(encoded):
        name = f"episode_{ep:05d}.bin"
        write_blob(out / name, encoded[ep])
        entries.append({"episode_id": ep, "file": name, "receiver_ids": list(receivers[ep]),
                        "shape": list(encoded[ep].shape)})
    index = {
        "mode": mode,
        "voxel": _grid_dict(preset.voxel),
        "coord": _grid_dict(preset.coord),
        "episodes": entries,
    }
    (out / INDEX_FILE).write_text(json.dumps(index, indent=2) + "\n")


def read_encoded(data_dir) -> tuple[str, dict[int, np.ndarray], dict[int, tuple[int, ...]]]:
    root = Path(data_dir)
    index = json.loads((root / INDEX_FILE).read_text())
    encoded, receivers = {}, {}
    for e in index["episodes"]:
        encoded[e["episode_id"]] = read_blob(root / e["file"])
        receivers[e["episode_id"]] = tuple(e["receiver_ids"])
    return index["mode"], encoded, receivers


def write_labels(path, rows) -> None:
    """``rows``: iterable of (episode_id, receiver_id, scene_id, beam_index, best_gain)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for ep, r, s, b, g in rows:
            w.writerow([int(ep), int(r), int(s), int(b), format(float(g), ".17g")])


def read_labels(path) -> list[tuple[int, int, int, int, float]]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != LABEL_COLUMNS:
            raise DomainError(f"{path}: expected columns {LABEL_COLUMNS}, got {reader.fieldnames}")
        return [(int(r["episode_id"]), int(r["receiver_id"]), int(r["scene_id"]), int(r["beam_index"]),
                 float(r["best_gain"])) for r in reader]


def label_sequences(rows, encoded: dict[int, np.ndarray], receivers: dict[int, tuple[int, ...]]) -> dict:
    """labels[ep][receiver] = per-scene list with None where the table has no row."""
    out = {ep: {r: [None] * encoded[ep].shape[1] for r in receivers[ep]} for ep in encoded}
    for ep, r, s, b, _ in rows:
        if ep in out:
            out[ep][r][s] = b
    return out


def load_samples(data_dir, window: int, labels_path=None) -> SampleSet:
    """Samples from an encoded directory and its labels table (default ``DIR/labels.csv``)."""
    mode, encoded, receivers = read_encoded(data_dir)
    rows = read_labels(labels_path or Path(data_dir) / LABEL_FILE)
    return SampleSet.assemble(encoded, label_sequences(rows, encoded, receivers), window, mode)
