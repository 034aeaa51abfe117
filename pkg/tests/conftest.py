"""Shared fixtures; the session-scoped trained pipeline feeds the acceptance suite."""

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import cellsched as cs
from cellsched import harness, powernet, schednet
from cellsched.nncore import TrainConfig, TrainReport


def desk_config(users_per_cell: int = 2) -> cs.SystemConfig:
    """Two-cell desk scenario, denser than the reference deployment so the
    links are genuinely interference-coupled."""
    return cs.SystemConfig(n_cells=2, users_per_cell=users_per_cell, area_side_m=60.0)


def desk_gp_label() -> cs.GpConfig:
    return cs.GpConfig()


def desk_gp_bench() -> cs.GpConfig:
    """High-accuracy profile for the reference method in benchmarks."""
    return cs.GpConfig(outer_tol=1e-5, inner_grad_tol=1e-7, inner_max_iters=400)


@dataclass
class DeskPipeline:
    config: cs.SystemConfig
    gp_label: cs.GpConfig
    gp_bench: cs.GpConfig
    power_net: powernet.PowerNet
    power_report: TrainReport
    power_train: powernet.PowerDataset
    power_val: powernet.PowerDataset
    sched_net: schednet.SchedNet
    sched_report: TrainReport
    sched_val_topologies: list
    held_out: list
    report: harness.RunReport


N_POWER_TOPOS = 1250  # x16 schedules = 20k power samples
N_SCHED_TOPOS = 2000
N_HELD_OUT = 200


@pytest.fixture(scope="session")
def desk_pipeline() -> DeskPipeline:
    """Train both networks at desk scale and benchmark all methods once."""
    config = desk_config()
    gp_label = desk_gp_label()
    gp_bench = desk_gp_bench()

    train_topos = [cs.generate_topology(config, seed=i) for i in range(N_POWER_TOPOS)]
    sched_topos = [
        cs.generate_topology(config, seed=20_000 + i) for i in range(N_SCHED_TOPOS)
    ]
    held_out = [
        cs.generate_topology(config, seed=100_000 + i) for i in range(N_HELD_OUT)
    ]

    p_train, p_val = powernet.make_power_dataset(
        train_topos, gp_label, val_fraction=0.08
    )
    power_net, power_report = powernet.train_power_net(
        p_train,
        p_val,
        TrainConfig(
            epochs=60, batch_size=256, learning_rate=1e-3,
            shuffle_seed=1, early_stop_patience=10,
        ),
        init_seed=1,
    )

    s_train, s_val = schednet.make_sched_dataset(sched_topos, power_net, val_fraction=0.1)
    sched_net, sched_report = schednet.train_sched_net(
        s_train,
        s_val,
        config.n_cells,
        config.users_per_cell,
        TrainConfig(
            epochs=40, batch_size=128, learning_rate=1e-3,
            shuffle_seed=2, early_stop_patience=8,
        ),
        init_seed=2,
    )

    methods = [
        harness.EXHAUSTIVE_GP,
        harness.MAX_DNN,
        harness.DQN_GP,
        harness.DQN_DNN,
        harness.dqn_dnn_k(5),
        harness.GREEDY_GP,
        harness.GREEDY_MP,
        harness.RANDOM_GP,
    ]
    report = harness.benchmark(
        methods,
        N_HELD_OUT,
        config,
        seed=777,
        gp_config=gp_bench,
        models=harness.ModelBundle(power=power_net, sched=sched_net),
        topologies=held_out,
    )

    n_sched_val = int(np.ceil(0.1 * N_SCHED_TOPOS))
    return DeskPipeline(
        config=config,
        gp_label=gp_label,
        gp_bench=gp_bench,
        power_net=power_net,
        power_report=power_report,
        power_train=p_train,
        power_val=p_val,
        sched_net=sched_net,
        sched_report=sched_report,
        sched_val_topologies=sched_topos[-n_sched_val:],
        held_out=held_out,
        report=report,
    )
