"""Experiment runner: config in, metrics/checkpoints/cost reports out.

Runs every seed sequentially with its own network and op counter, then
writes, into the output directory:

* metrics.csv         one row per (seed, epoch) with accuracies, integer
                      loss, and cumulative op totals
* summary.json        config snapshot, per-seed finals, mean/std accuracy,
                      op totals, and the memory report
* config.resolved.cfg the exact configuration the run used
* checkpoint_seed<k>.isnw   shadow weights per seed

Outputs contain no timestamps or environment detail, so a rerun with the
same config and seeds is byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, replace

from . import config as config_mod
from . import data as data_mod
from . import learner, network, weights
from .costs import OpCounter


@dataclass
class SeedResult:
    seed: int
    records: list
    final_train_acc: float
    final_test_acc: float
    ops: dict


@dataclass
class RunManifest:
    cfg: config_mod.ExperimentConfig
    out_dir: str
    results: list


def _accuracy_stats(values):
    if not values:
        return 0.0, 0.0
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, var ** 0.5


def run_experiment(cfg: config_mod.ExperimentConfig, out_dir: str,
                   dataset_dir=None) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    dataset = data_mod.open_dataset(cfg, dataset_dir)
    results = []
    for seed in cfg.seeds:
        counter = OpCounter(mode=cfg.counting)
        net = network.build_network(cfg, seed)
        records = learner.run_training(net, dataset, cfg, counter, seed)
        weights.save_checkpoint(
            os.path.join(out_dir, f"checkpoint_seed{seed}.isnw"),
            net.weight_layers())
        final = records[-1] if records else None
        results.append(SeedResult(
            seed=seed, records=records,
            final_train_acc=final.train_acc if final else 0.0,
            final_test_acc=final.test_acc if final else 0.0,
            ops=counter.snapshot()))
    manifest = RunManifest(cfg=cfg, out_dir=out_dir, results=results)
    emit_report(manifest)
    return manifest


METRICS_HEADER = ["epoch", "seed", "train_acc", "test_acc", "loss",
                  "add", "mul", "bmul", "shift"]


def emit_report(manifest: RunManifest) -> None:
    cfg = manifest.cfg
    out = manifest.out_dir
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_HEADER)
        for res in manifest.results:
            for rec in res.records:
                writer.writerow([
                    rec.epoch, res.seed,
                    f"{rec.train_acc:.6f}", f"{rec.test_acc:.6f}", rec.loss,
                    rec.ops["add"], rec.ops["mul"], rec.ops["bmul"],
                    rec.ops["shift"],
                ])
    with open(os.path.join(out, "config.resolved.cfg"), "w") as f:
        f.write(config_mod.to_text(cfg))
    finals = [r.final_test_acc for r in manifest.results]
    mean, std = _accuracy_stats(finals)
    mem = network.memory_report(cfg)
    mem_fp32 = network.memory_report(cfg, fp32=True)
    summary = {
        "config": config_mod.to_text(cfg),
        "seeds": list(cfg.seeds),
        "per_seed": [
            {"seed": r.seed, "final_train_acc": r.final_train_acc,
             "final_test_acc": r.final_test_acc, "ops": r.ops}
            for r in manifest.results
        ],
        "mean_test_acc": mean,
        "std_test_acc": std,
        "memory": mem.as_dict(),
        "memory_fp32": mem_fp32.as_dict(),
        "memory_ratio": (mem.total_bytes / mem_fp32.total_bytes
                         if mem_fp32.total_bytes else 0.0),
    }
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out, "memory.txt"), "w") as f:
        f.write(mem.as_text() + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intspike-train",
        description="Integer-only online training for spiking networks")
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (section.key=value), repeatable")
    parser.add_argument("--out", default="runs/out", help="output directory")
    parser.add_argument("--seeds", default=None,
                        help="seed count or comma list, overrides the config")
    parser.add_argument("--dataset-dir", default=None,
                        help="directory holding the dataset files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config, args.set)
        if args.seeds is not None:
            cfg = config_mod.resolve(
                replace(cfg, seeds=config_mod._seeds(args.seeds)))
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(cfg, args.out, args.dataset_dir)
    except FileNotFoundError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3
    except data_mod.DatasetFormatError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3
    finals = [r.final_test_acc for r in manifest.results]
    mean, std = _accuracy_stats(finals)
    print(f"seeds: {list(cfg.seeds)}")
    print(f"mean_test_acc: {mean:.4f}  std: {std:.4f}")
    print(f"outputs in {manifest.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
