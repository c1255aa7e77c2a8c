"""Command-line entry point (``depthpolyp <subcommand>``)."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import config_hash, flatten, load_config
from .data import load_dataset, save_dataset, synth_dataset, Sample
from .degrade import degrade_sample, write_manifest
from .errors import DepthPolypError
from .metrics import write_report
from .network import DepthPolypNet, mac_table, parameter_summary, parameter_table, total_macs
from .quadrant import quadrant_eval, write_quadrant_report
from .train import bench_fps, evaluate, train_model


def _add_config_args(p):
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config entry (repeatable)")


def _run_config(args):
    overrides = {}
    for item in args.set:
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides)


def _cmd_synth(args):
    cfg = _run_config(args)
    n = args.n if args.n is not None else cfg.data.train_n
    seed = args.seed if args.seed is not None else cfg.data.seed
    samples = synth_dataset(n, cfg.data.size, seed)
    save_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples ({cfg.data.size}x{cfg.data.size}) to {args.out}")


def _cmd_degrade(args):
    cfg = _run_config(args)
    seed = args.seed if args.seed is not None else cfg.data.noisy_seed
    samples = load_dataset(args.src)
    degraded, records = [], []
    for index, s in enumerate(samples):
        img, mask, depth, events = degrade_sample(
            s.image, s.mask, s.depth, seed, index, cfg.degrade)
        degraded.append(Sample(id=s.id, image=img, mask=mask, depth=depth,
                               condition="noisy"))
        records.append({"id": s.id, "seed": seed, "index": index,
                        "events": events})
    save_dataset(args.out, degraded)
    manifest = os.path.join(args.out, "manifest.jsonl")
    write_manifest(manifest, records)
    print(f"wrote {len(degraded)} degraded samples + {manifest}")


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _cmd_train(args):
    cfg = _run_config(args)
    if args.condition:
        cfg.train.condition = args.condition
    if args.seed is not None:
        cfg.train.seed = args.seed
    samples = load_dataset(args.data)
    net = DepthPolypNet(cfg.net)
    history = train_model(net, samples, cfg.train, cfg.degrade)
    _ensure_parent(args.out)
    save_checkpoint(args.out, net)
    with open(args.out + ".history.jsonl", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row) + "\n")
    manifest = {
        "seed": cfg.train.seed,
        "condition": cfg.train.condition,
        "config_hash": config_hash(cfg),
        "steps": len(history),
        "final_loss": history[-1]["loss"] if history else None,
    }
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"trained {len(history)} steps on {len(samples)} samples "
          f"({cfg.train.condition}); checkpoint at {args.out}")


def _load_net(cfg, path):
    net = DepthPolypNet(cfg.net)
    load_checkpoint(path, net)
    return net


def _cmd_eval(args):
    cfg = _run_config(args)
    net = _load_net(cfg, args.checkpoint)
    samples = load_dataset(args.testset)
    report = evaluate(net, samples, threshold=cfg.train.threshold,
                      batch_size=cfg.train.batch_size)
    print(json.dumps(report.summary()))
    if args.report:
        _ensure_parent(args.report)
        paths = write_report(args.report, report)
        print(f"report written to {paths[0]} and {paths[1]}")


def _cmd_quadrant(args):
    cfg = _run_config(args)
    clean_net = _load_net(cfg, args.clean_ckpt)
    noisy_net = _load_net(cfg, args.noisy_ckpt)
    clean_set = load_dataset(args.clean_set)
    noisy_set = load_dataset(args.noisy_set, condition="noisy")
    report = quadrant_eval(clean_net, noisy_net, clean_set, noisy_set,
                           threshold=cfg.train.threshold,
                           batch_size=cfg.train.batch_size)
    print(json.dumps(report.summary()))
    if args.report:
        _ensure_parent(args.report)
        paths = write_quadrant_report(args.report, report)
        print(f"report written to {paths[0]} and {paths[1]}")


def _cmd_count(args):
    cfg = _run_config(args)
    net = DepthPolypNet(cfg.net)
    print("parameters:")
    for name, shape, count in parameter_table(net):
        print(f"  {name:<42} {str(shape):<22} {count}")
    for group, count in parameter_summary(net).items():
        print(f"  [{group}] {count}")
    size = args.size if args.size is not None else cfg.data.size
    print(f"macs at {size}x{size} (batch 1):")
    for name, count in mac_table(cfg.net, size, size):
        print(f"  {name:<42} {count}")
    total = total_macs(cfg.net, size, size)
    print(f"  [total] {total} ({total / 1e9:.6f} GMACs)")


def _cmd_bench(args):
    cfg = _run_config(args)
    net = (_load_net(cfg, args.checkpoint) if args.checkpoint
           else DepthPolypNet(cfg.net))
    size = args.size if args.size is not None else cfg.data.size
    result = bench_fps(net, size, warmup=args.warmup, iters=args.iters)
    print(json.dumps(result))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="depthpolyp",
        description="Lightweight depth-guided polyp segmentation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("degrade", help="materialize a degraded corpus + manifest")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_degrade)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--condition", choices=("clean", "noisy"), default=None)
    p.add_argument("--seed", type=int, default=None)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--testset", required=True)
    p.add_argument("--report", default=None, help="base path for csv/jsonl")
    _add_config_args(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("quadrant", help="four-quadrant robustness evaluation")
    p.add_argument("--clean-ckpt", required=True)
    p.add_argument("--noisy-ckpt", required=True)
    p.add_argument("--clean-set", required=True)
    p.add_argument("--noisy-set", required=True)
    p.add_argument("--report", default=None)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_quadrant)

    p = sub.add_parser("count", help="parameter and MAC accounting tables")
    p.add_argument("--size", type=int, default=None)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_count)

    p = sub.add_parser("bench", help="forward-pass FPS benchmark")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except DepthPolypError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
