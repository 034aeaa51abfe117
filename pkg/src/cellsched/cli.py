"""Command-line entry points: topology/dataset generation, training, benchmarks.

A config file is a JSON object with optional "system", "gp", and "train"
sections whose keys override the corresponding dataclass defaults, e.g.

    {"system": {"n_cells": 2, "users_per_cell": 2}, "gp": {"outer_tol": 1e-4}}
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .gp import GpConfig
from .harness import ModelBundle, benchmark, export, parse_method, run_method
from .nncore import TrainConfig
from .powernet import PowerDataset, PowerNet, make_power_dataset, train_power_net
from .schednet import SchedNet, make_sched_dataset, train_sched_net
from .topo import SystemConfig, generate_topology, load_topology, save_topology


def load_configs(path: str | None) -> tuple[SystemConfig, GpConfig, TrainConfig]:
    data = {}
    if path:
        with open(path) as f:
            data = json.load(f)
    return (
        SystemConfig(**data.get("system", {})),
        GpConfig(**data.get("gp", {})),
        TrainConfig(**data.get("train", {})),
    )


def _progress(label: str):
    def cb(done: int, total: int) -> None:
        if done % max(1, total // 20) == 0 or done == total:
            print(f"  {label}: {done}/{total}", flush=True)

    return cb


def _load_topologies(directory: str) -> list:
    paths = sorted(Path(directory).glob("topo_*.json"))
    if not paths:
        raise SystemExit(f"no topo_*.json files in {directory}")
    return [load_topology(p) for p in paths]


def cmd_gen_topo(args) -> None:
    system, _, _ = load_configs(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        topo = generate_topology(system, seed)
        save_topology(topo, out / f"topo_{seed:08d}.json")
    print(f"wrote {args.count} topologies to {out}")


def cmd_gen_dataset(args) -> None:
    _, gp_config, _ = load_configs(args.config)
    topologies = _load_topologies(args.topos)
    print(f"labelling {len(topologies)} topologies with GP solves ...")
    train_set, val_set = make_power_dataset(
        topologies, gp_config, args.val_fraction, progress=_progress("topologies")
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set.save(out / "power_train.npz")
    val_set.save(out / "power_val.npz")
    print(
        f"wrote {train_set.n_samples} train / {val_set.n_samples} val samples "
        f"({train_set.n_dropped} dropped) to {out}"
    )


def cmd_train_power(args) -> None:
    _, _, train_cfg = load_configs(args.config)
    data = Path(args.data)
    train_set = PowerDataset.load(data / "power_train.npz")
    val_set = PowerDataset.load(data / "power_val.npz")
    print(f"training on {train_set.n_samples} samples ...")
    net, report = train_power_net(train_set, val_set, train_cfg, init_seed=args.init_seed)
    net.save(args.out)
    print(
        f"epochs={report.epochs_run} best_epoch={report.best_epoch} "
        f"val_mse {report.val_mse[0]:.5f} -> {min(report.val_mse):.5f}; saved {args.out}"
    )


def cmd_train_sched(args) -> None:
    _, _, train_cfg = load_configs(args.config)
    power_net = PowerNet.load(args.power_model)
    topologies = _load_topologies(args.data)
    cfg = topologies[0].config
    print(f"building schedule targets for {len(topologies)} topologies ...")
    train_set, val_set = make_sched_dataset(
        topologies, power_net, args.val_fraction, progress=_progress("topologies")
    )
    net, report = train_sched_net(
        train_set, val_set, cfg.n_cells, cfg.users_per_cell, train_cfg,
        init_seed=args.init_seed,
    )
    net.save(args.out)
    print(
        f"epochs={report.epochs_run} best_epoch={report.best_epoch} "
        f"val_mse {report.val_mse[0]:.5f} -> {min(report.val_mse):.5f}; saved {args.out}"
    )


def _bundle(args) -> ModelBundle:
    return ModelBundle(
        power=PowerNet.load(args.power_model) if args.power_model else None,
        sched=SchedNet.load(args.sched_model) if args.sched_model else None,
    )


def cmd_eval(args) -> None:
    system, gp_config, _ = load_configs(args.config)
    method = parse_method(args.method)
    models = _bundle(args)
    rng = np.random.default_rng(args.seed)
    topo = generate_topology(system, args.seed)
    run = run_method(method, topo, models, gp_config, rng=rng)
    print(
        json.dumps(
            {
                "method": method.label,
                "seed": args.seed,
                "schedule_flat_index": run.schedule.flat_index,
                "wsr_mbps": run.alloc.wsr_bps / 1e6,
                "decision_time_s": run.time_s,
                "gp_iters": run.gp_iters,
            },
            indent=2,
        )
    )


def cmd_bench(args) -> None:
    system, gp_config, _ = load_configs(args.config)
    methods = [parse_method(m) for m in args.methods.split(",")]
    models = _bundle(args)
    t0 = time.perf_counter()
    report = benchmark(
        methods, args.n, system, seed=args.seed, gp_config=gp_config, models=models
    )
    files = export(report, args.out)
    print(f"benchmark over {args.n} topologies took {time.perf_counter() - t0:.1f}s")
    for row in report.summary:
        print(
            f"  {row.label:16s} mean WSR {row.mean_wsr_bps / 1e6:9.3f} Mbit/s   "
            f"mean time {row.mean_time_s:.6f} s   loss {row.pct_loss:7.2f}%"
        )
    print(f"wrote {len(files)} files to {args.out}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cellsched",
        description="Link scheduling and power allocation: simulation, training, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-topo", help="generate random topology drops as JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_topo)

    p = sub.add_parser("gen-dataset", help="label topologies with GP power solutions")
    p.add_argument("--config", default=None)
    p.add_argument("--topos", required=True, help="directory of topo_*.json files")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train-power", help="train the power-allocation network")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True, help="directory with power_{train,val}.npz")
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_power)

    p = sub.add_parser("train-sched", help="train the schedule-value network")
    p.add_argument("--config", default=None)
    p.add_argument("--power-model", required=True)
    p.add_argument("--data", required=True, help="directory of topo_*.json files")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_sched)

    p = sub.add_parser("eval", help="run one method on one generated topology")
    p.add_argument("--config", default=None)
    p.add_argument("--method", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--power-model", default=None)
    p.add_argument("--sched-model", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="paired benchmark over many topologies")
    p.add_argument("--config", default=None)
    p.add_argument("--methods", required=True, help="comma-separated method labels")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--power-model", default=None)
    p.add_argument("--sched-model", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
