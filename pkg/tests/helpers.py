"""Shared test utilities: channel-model problem draws and the grid oracle."""

import numpy as np

import cellsched as cs


def random_link_problem(n_links: int, seed: int, users_per_cell: int = 2,
                        area_side_m: float = 120.0) -> cs.LinkProblem:
    """One n-link problem: a random drop plus a random schedule."""
    cfg = cs.SystemConfig(
        n_cells=n_links, users_per_cell=users_per_cell, area_side_m=area_side_m
    )
    topo = cs.generate_topology(cfg, seed=seed)
    rng = np.random.default_rng(seed + 999_000)
    total = cs.schedule_count(n_links, users_per_cell)
    sched = cs.Schedule.from_flat(int(rng.integers(total)), n_links, users_per_cell)
    return cs.build_link_problem(topo, sched)


def grid_oracle_uncapped(problem: cs.LinkProblem, n_points: int,
                         p_floor_frac: float = 1e-8) -> float:
    """Brute-force max of the uncapped WSR over a per-link power grid.

    Independent of the GP path: direct evaluation of the objective on a
    linspace grid from the power floor to the cap in every coordinate.
    """
    n = problem.n_links
    lo = p_floor_frac * problem.p_max_w
    axes = [np.linspace(lo[i], problem.p_max_w[i], n_points) for i in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    g, w = problem.gains, problem.weights
    wsr = np.zeros(grids[0].shape)
    for i in range(n):
        interference = problem.noise_w[i]
        for j in range(n):
            if j != i:
                interference = interference + g[i, j] * grids[j]
        sinr = g[i, i] * grids[i] / interference
        wsr = wsr + w[i] * problem.bandwidth_hz * np.log2(1.0 + sinr)
    return float(wsr.max())


def hand_problem(gains, weights, noise, p_max, bandwidth_hz=1.0, se_cap=7.0,
                 directions=None) -> cs.LinkProblem:
    gains = np.asarray(gains, dtype=float)
    n = gains.shape[0]
    return cs.LinkProblem(
        gains=gains,
        weights=np.asarray(weights, dtype=float),
        directions=np.asarray(directions if directions is not None else [1] * n),
        noise_w=np.asarray(noise, dtype=float),
        p_max_w=np.asarray(p_max, dtype=float),
        bandwidth_hz=bandwidth_hz,
        se_cap_bps_hz=se_cap,
    )
