"""``beamtrack`` command line: generate, encode, label, train, eval."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import records
from .errors import BeamTrackError
from .scene import PRESETS, Preset, generate_episodes, make_scenario
from .tracker.checkpoint import load_checkpoint, save_checkpoint
from .tracker.config import TrackerConfig
from .tracker.data import Labeler, encode_episode, label_episode
from .tracker.evaluate import evaluate_topk
from .tracker.store import LABEL_FILE, load_samples, resolve_grid, write_encoded, write_labels
from .tracker.train import apply_split, split_episodes, train

log = logging.getLogger("beamtrack")


def cmd_generate(args) -> None:
    base = PRESETS[args.scenario]
    preset = Preset(base.name, base.kind, args.scenes or base.n_scenes, args.receivers or base.n_receivers,
                    args.episodes)
    scenario = make_scenario(preset.kind)
    episodes = generate_episodes(scenario, preset, args.episodes, args.seed, static=args.static)
    meta = {"preset": preset.name, "kind": preset.kind, "seed": args.seed, "static": args.static,
            "n_scenes": preset.n_scenes, "n_receivers": preset.n_receivers}
    records.write_dataset(args.out, episodes, meta)
    log.info("wrote %d episodes to %s", len(episodes), args.out)


def cmd_encode(args) -> None:
    meta, episodes = records.read_dataset(args.input)
    grid = resolve_grid(args.grid, meta["kind"])
    encoded, receivers = {}, {}
    for ep in episodes:
        encoded[ep.episode_id] = encode_episode(ep, args.mode, grid, args.gradient_len)
        receivers[ep.episode_id] = ep.receiver_ids
    write_encoded(args.out, args.mode, grid, encoded, receivers)
    log.info("encoded %d episodes (%s) into %s", len(episodes), args.mode, args.out)


def cmd_label(args) -> None:
    _, episodes = records.read_dataset(args.input)
    labeler = Labeler.default(n_tx=args.n_tx or args.beams, n_beams=args.beams, n_rx=args.n_rx,
                              pair_mode=args.pair)
    rows, outages = [], 0
    for ep in episodes:
        for r, seq in sorted(label_episode(ep, labeler).items()):
            for s, out in enumerate(seq):
                if out is None:
                    outages += 1
                else:
                    rows.append((ep.episode_id, r, s, out[0], out[1]))
    Path(args.out).mkdir(parents=True, exist_ok=True)
    write_labels(Path(args.out) / LABEL_FILE, rows)
    log.info("labeled %d scenes, %d outages excluded", len(rows), outages)


def _load_config(path) -> TrackerConfig:
    return TrackerConfig.load(path) if path else TrackerConfig()


def cmd_train(args) -> None:
    config = _load_config(args.config)
    samples = load_samples(args.data, config.window, args.labels)
    if samples.mode != config.input_mode:
        config = TrackerConfig.from_dict({**config.to_dict(), "input_mode": samples.mode})
        log.info("input mode taken from the encoded data: %s", samples.mode)

    def progress(name, rec):
        log.info("%s epoch %3d  loss %.4f  val top-1 %.4f  (%.1f s)", name, rec.epoch, rec.train_loss,
                 rec.val_top1, rec.seconds)

    outcome = train(samples, config, with_selection=not args.no_selection, on_epoch=progress)
    save_checkpoint(args.out, outcome)
    log.info("checkpoint written to %s (best tracker epoch %d, val top-1 %.4f)", args.out,
             outcome.tracker.best_epoch, outcome.tracker.best_val_top1)


def cmd_eval(args) -> None:
    manifest, tracker, selection = load_checkpoint(args.ckpt)
    config = tracker.config
    samples = load_samples(args.data, config.window, args.labels)
    if args.split == "all":
        subset = samples
    else:
        split = split_episodes(samples.episode_ids, config.split, config.seed)
        if list(split.test) != manifest["split"]["test"]:
            log.warning("episode split differs from the one stored in the checkpoint")
        subset = dict(zip(("train", "val", "test"), apply_split(samples, split)))[args.split]
    ks = [int(k) for k in args.topk.split(",") if k.strip()]
    report = evaluate_topk(tracker, selection, subset, ks, closed_loop=args.closed_loop)
    report.write_csv(args.out)
    print(report.format())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamtrack", description="mmWave beam tracking from scene sensing.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate episodes and write episode records")
    g.add_argument("--scenario", choices=sorted(PRESETS), required=True)
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--static", action="store_true", help="freeze every vehicle")
    g.add_argument("--scenes", type=int, help="override scenes per episode")
    g.add_argument("--receivers", type=int, help="override receivers per episode")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("encode", help="encode scenes as voxel grids or coordinate matrices")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--mode", choices=["lidar", "gnss"], required=True)
    e.add_argument("--grid", default="auto", help="auto, a preset name, or a JSON grid file")
    e.add_argument("--gradient-len", type=int, default=4)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    lb = sub.add_parser("label", help="optimal beam per scene by exhaustive sweep")
    lb.add_argument("--in", dest="input", required=True)
    lb.add_argument("--beams", type=int, default=64)
    lb.add_argument("--n-tx", type=int, help="BS antennas (default: same as --beams)")
    lb.add_argument("--n-rx", type=int, default=1)
    lb.add_argument("--pair", action="store_true", help="label Tx/Rx pairs instead of BS beams")
    lb.add_argument("--out", required=True)
    lb.set_defaults(func=cmd_label)

    t = sub.add_parser("train", help="train the tracker and the selection ablation")
    t.add_argument("--data", required=True, help="encoded directory")
    t.add_argument("--labels", help="labels CSV (default DATA/labels.csv)")
    t.add_argument("--config", help="TrackerConfig JSON (defaults if omitted)")
    t.add_argument("--no-selection", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="top-K accuracy report")
    v.add_argument("--data", required=True)
    v.add_argument("--labels")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--topk", default="1,2,3,4,5,6,7,8,9,10")
    v.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    v.add_argument("--closed-loop", action="store_true", help="also report self-fed history")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (BeamTrackError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"beamtrack {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
