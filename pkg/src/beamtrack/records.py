"""Episode records on disk.

A dataset directory holds ``scenario.json`` plus one JSON-lines file per
episode (``episode_00000.jsonl``), one scene object per line::

    {"scene_id": 0, "t_ms": 0.0, "episode_id": 3,
     "vehicles": [{"vehicle_id", "position", "velocity", "heading", "bbox", "is_receiver"}],
     "rays": {"<receiver id>": [{"gain_re", "gain_im", "aod_az", "aod_el",
                                 "aoa_az", "aoa_el", "delay_s"}]},
     "serving_bs": {"<receiver id>": 0}}

Floats are written with 17 significant digits so a read-back is exact.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from .errors import DomainError
from .mimo import RayPath
from .scene import Episode, Scenario, Scene, VehicleState, make_scenario

SCENARIO_FILE = "scenario.json"


def dumps(obj) -> str:
    """Compact JSON with every float written as ``%.17g``."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise DomainError(f"cannot serialize non-finite float {obj}")
        s = format(obj, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "item"):  # numpy scalar
        return dumps(obj.item())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _floats(xs) -> list[float]:
    return [float(x) for x in xs]


def vehicle_record(v: VehicleState) -> dict:
    return {
        "vehicle_id": int(v.vehicle_id),
        "position": _floats(v.position),
        "velocity": _floats(v.velocity),
        "heading": float(v.heading),
        "bbox": _floats(v.bbox),
        "is_receiver": bool(v.is_receiver),
    }


def ray_record(r: RayPath) -> dict:
    g = complex(r.gain)
    return {
        "gain_re": g.real, "gain_im": g.imag,
        "aod_az": float(r.aod_az), "aod_el": float(r.aod_el),
        "aoa_az": float(r.aoa_az), "aoa_el": float(r.aoa_el),
        "delay_s": float(r.delay),
    }


def scene_record(scene: Scene, episode_id: int) -> dict:
    return {
        "scene_id": int(scene.scene_id),
        "t_ms": float(scene.t_ms),
        "episode_id": int(episode_id),
        "vehicles": [vehicle_record(v) for v in scene.vehicles],
        "rays": {str(r): [ray_record(x) for x in rays] for r, rays in sorted(scene.per_receiver_rays.items())},
        "serving_bs": {str(r): int(b) for r, b in sorted(scene.serving_bs.items())},
    }


def scene_from_record(d: dict) -> Scene:
    vehicles = tuple(
        VehicleState(v["vehicle_id"], tuple(v["position"]), tuple(v["velocity"]), v["heading"],
                     tuple(v["bbox"]), v["is_receiver"])
        for v in d["vehicles"]
    )
    rays = {
        int(r): [RayPath(complex(x["gain_re"], x["gain_im"]), x["aod_az"], x["aod_el"], x["aoa_az"],
                         x["aoa_el"], x["delay_s"]) for x in lst]
        for r, lst in d["rays"].items()
    }
    serving = {int(r): int(b) for r, b in d["serving_bs"].items()}
    return Scene(int(d["scene_id"]), float(d["t_ms"]), vehicles, rays, serving)


def episode_filename(episode_id: int) -> str:
    return f"episode_{episode_id:05d}.jsonl"


def write_episode(path, episode: Episode) -> None:
    lines = [dumps(scene_record(s, episode.episode_id)) for s in episode.scenes]
    Path(path).write_text("\n".join(lines) + "\n")


def read_episode(path, scenario: Scenario, scene_interval_ms: float = 20.0) -> Episode:
    scenes, ids = [], set()
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            ids.add(d["episode_id"])
            scenes.append(scene_from_record(d))
    if len(ids) != 1:
        raise DomainError(f"{path}: expected exactly one episode id, found {sorted(ids)}")
    receivers = tuple(sorted(scenes[0].per_receiver_rays))
    return Episode(ids.pop(), scenario, tuple(scenes), scene_interval_ms, receivers)


def write_dataset(out_dir, episodes, meta: dict) -> None:
    """``meta`` needs ``kind`` and may carry ``speed_range`` and any provenance keys."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(meta)
    meta["episodes"] = [episode_filename(e.episode_id) for e in episodes]
    if episodes:
        meta.setdefault("scene_interval_ms", episodes[0].scene_interval_ms)
        meta.setdefault("speed_range", list(episodes[0].scenario.speed_range))
    (out / SCENARIO_FILE).write_text(dumps(meta) + "\n")
    for e in episodes:
        write_episode(out / episode_filename(e.episode_id), e)


def read_meta(data_dir) -> dict:
    return json.loads((Path(data_dir) / SCENARIO_FILE).read_text())


def scenario_from_meta(meta: dict) -> Scenario:
    sc = make_scenario(meta["kind"])
    if "speed_range" in meta:
        sc = sc.with_speed_range(*meta["speed_range"])
    return sc


def read_dataset(data_dir) -> tuple[dict, list[Episode]]:
    meta = read_meta(data_dir)
    sc = scenario_from_meta(meta)
    dt = float(meta.get("scene_interval_ms", 20.0))
    eps = [read_episode(Path(data_dir) / name, sc, dt) for name in meta["episodes"]]
    return meta, eps
