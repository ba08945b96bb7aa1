"""Command line entry point: ``pointdr augment|simulate|train|eval``.

A data directory holds ``velodyne/<stem>.bin`` scans with matching
``labels/<stem>.label`` files. An optional ``weather.txt`` tags scans for
per-weather reporting: each line is ``<stem> <tag>``, and a line holding a
lone tag applies to every scan not listed by name.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, strong_view, weak_view
from .experiment import corrupted_split, evaluate
from .model import load_checkpoint, save_checkpoint
from .pc_io import read_labeled_scan, read_labels, read_scan, write_labels, write_scan
from .toy import ToyBenchmark, generate_toy
from .trainer import TrainConfig, parse_config, train
from .weather import MODES, WeatherConfig, corrupt


def provenance_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".provenance")


def read_weather_tags(path) -> tuple[dict, str | None]:
    tags, default = {}, None
    for line in Path(path).read_text().splitlines():
        parts = line.split("#", 1)[0].split()
        if len(parts) == 1:
            default = parts[0]
        elif len(parts) == 2:
            tags[parts[0]] = parts[1]
        elif parts:
            raise ValueError(f"{path}: bad line {line!r}")
    return tags, default


def load_dataset(root) -> list:
    """All labelled scans under ``root``, sorted by file stem."""
    root = Path(root)
    scans = sorted((root / "velodyne").glob("*.bin"))
    if not scans:
        raise FileNotFoundError(f"{root}: no velodyne/*.bin scans")
    tags, default = {}, None
    if (root / "weather.txt").exists():
        tags, default = read_weather_tags(root / "weather.txt")
    out = []
    for scan in scans:
        label = root / "labels" / (scan.stem + ".label")
        if not label.exists():
            raise FileNotFoundError(f"{label}: missing labels for {scan.name}")
        out.append(read_labeled_scan(scan, label, weather=tags.get(scan.stem, default)))
    return out


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def cmd_augment(args) -> int:
    cloud = read_scan(args.inp)
    if args.labels:
        cloud = cloud.replace(labels=read_labels(args.labels))
    if args.view == "weak":
        out, index = weak_view(cloud, AugmentConfig(), args.seed), None
    else:
        out, index = strong_view(cloud, AugmentConfig(), args.seed)
    write_scan(out, args.out)
    if out.labels is not None:
        write_labels(out.labels, Path(args.out).with_suffix(".label"))
    if index is not None:
        # one source index per output point; -1 marks injected noise
        np.savetxt(provenance_path(args.out), index, fmt="%d")
    print(f"{args.view} view: {len(cloud)} -> {len(out)} points, wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cloud = read_labeled_scan(args.inp, args.labels)
    cfg = WeatherConfig(args.mode, fog_range_cap=args.fog_range_cap)
    out = corrupt(cloud, cfg, args.seed)
    prefix = Path(args.out_prefix)
    write_scan(out, prefix.with_name(prefix.name + ".bin"))
    write_labels(out.labels, prefix.with_name(prefix.name + ".label"))
    print(f"{args.mode}: {len(cloud)} -> {len(out)} points, wrote {prefix}.bin/.label")
    return 0


def cmd_train(args) -> int:
    cfg = parse_config(Path(args.config).read_text()) if args.config else TrainConfig()
    if args.data == "toy":
        data = generate_toy("train", ToyBenchmark(), cfg.seed)
    else:
        data = load_dataset(args.data)
    objective = "ce" if args.baseline else "pointdr"
    if args.baseline:
        cfg = cfg.baseline()

    def log(row):
        if not args.quiet:
            print("epoch {epoch:3d}  ce {ce:.4f}  ct {ct:.4f}  total {total:.4f}  lr {lr:.4g}"
                  .format(**row), flush=True)

    result = train(None, cfg, data, objective, log=log)
    save_checkpoint(args.out, result.model, result.bank)
    curve = Path(args.curve) if args.curve else Path(args.out).with_suffix(".curve.csv")
    curve.write_text(result.curve_csv())
    print(f"wrote {args.out} and {curve}")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    if args.data == "toy":
        val = generate_toy("val", ToyBenchmark(), args.seed)
        scans = val + corrupted_split(val, args.seed, MODES)
    else:
        scans = load_dataset(args.data)
    table = evaluate(model, scans)
    Path(args.out).write_text(table.to_csv())
    print(table.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="write a weak or strong view of one scan")
    p.add_argument("--in", dest="inp", required=True, help="input .bin scan")
    p.add_argument("--labels", help="optional .label file carried through the view")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--view", choices=("weak", "strong"), required=True)
    p.add_argument("--out", required=True, help="output .bin scan")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("simulate", help="apply a synthetic weather corruption")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out-prefix", required=True, help="writes <prefix>.bin and <prefix>.label")
    p.add_argument("--fog-range-cap", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train on a data directory or the toy benchmark")
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--data", required=True, help="data directory, or 'toy'")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curve", help="loss curve CSV (default: <out>.curve.csv)")
    p.add_argument("--baseline", action="store_true", help="cross-entropy only")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-class and per-weather IoU report")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="data directory, or 'toy'")
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--seed", type=_seed, default=0, help="toy split seed")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"pointdr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
