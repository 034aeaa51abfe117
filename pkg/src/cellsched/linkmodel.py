"""Schedule space, per-schedule link problems, and SINR / weighted sum-rate.

A schedule activates exactly one link per cell: a (user slot, direction)
choice. With N cells and M users per cell there are (2M)^N schedules; each
induces an N-link power-allocation problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable, Sequence

import numpy as np

from .topo import NodeKind, Topology, noise_power_w

# Refuse to materialize schedule spaces past this size.
MAX_SCHEDULE_COUNT = 2**31 - 1


class Direction(IntEnum):
    DOWNLINK = 0
    UPLINK = 1


@dataclass(frozen=True)
class Schedule:
    """One (user slot, direction) choice per cell plus its flat index."""

    choices: tuple[tuple[int, Direction], ...]
    flat_index: int

    @staticmethod
    def from_choices(
        choices: Sequence[tuple[int, Direction]], users_per_cell: int
    ) -> "Schedule":
        base = 2 * users_per_cell
        flat = 0
        for c, (slot, direction) in enumerate(choices):
            if not 0 <= slot < users_per_cell:
                raise ValueError(f"user slot {slot} out of range for M={users_per_cell}")
            flat += (2 * slot + int(direction)) * base**c
        return Schedule(
            choices=tuple((s, Direction(d)) for s, d in choices), flat_index=flat
        )

    @staticmethod
    def from_flat(flat_index: int, n_cells: int, users_per_cell: int) -> "Schedule":
        base = 2 * users_per_cell
        total = base**n_cells
        if not 0 <= flat_index < total:
            raise ValueError(f"flat_index {flat_index} out of range [0, {total})")
        rem = flat_index
        choices = []
        for _ in range(n_cells):
            digit = rem % base
            rem //= base
            choices.append((digit // 2, Direction(digit % 2)))
        return Schedule(choices=tuple(choices), flat_index=flat_index)


def schedule_count(n_cells: int, users_per_cell: int) -> int:
    return (2 * users_per_cell) ** n_cells


def enumerate_schedules(n_cells: int, users_per_cell: int) -> list[Schedule]:
    """All (2M)^N schedules in ascending flat-index order."""
    if n_cells < 1 or users_per_cell < 1:
        raise ValueError("n_cells and users_per_cell must be >= 1")
    total = schedule_count(n_cells, users_per_cell)
    if total > MAX_SCHEDULE_COUNT:
        raise ValueError(
            f"schedule space too large to enumerate: (2*{users_per_cell})^{n_cells}"
            f" = {total} > {MAX_SCHEDULE_COUNT}"
        )
    return [Schedule.from_flat(k, n_cells, users_per_cell) for k in range(total)]


@dataclass(frozen=True)
class LinkProblem:
    """The N active links induced by one schedule.

    ``gains[i, j]`` is the linear gain from the transmitter of link j to the
    receiver of link i; ``directions[i]`` is 1 for downlink and 0 for uplink.
    """

    gains: np.ndarray
    weights: np.ndarray
    directions: np.ndarray
    noise_w: np.ndarray
    p_max_w: np.ndarray
    bandwidth_hz: float
    se_cap_bps_hz: float = 7.0

    def __post_init__(self) -> None:
        g = self.gains
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("gains must be a square matrix")
        if not np.all(np.isfinite(g)):
            raise ValueError("gains must be finite")
        if np.any(np.diag(g) <= 0):
            raise ValueError("diagonal (signal) gains must be positive")
        if np.any(g < 0):
            raise ValueError("gains must be non-negative")
        if np.any(self.noise_w <= 0) or np.any(self.p_max_w <= 0):
            raise ValueError("noise and power caps must be positive")
        if np.any((self.weights < 0) | (self.weights > 1)):
            raise ValueError("weights must lie in [0, 1]")
        for arr in (self.gains, self.weights, self.directions, self.noise_w, self.p_max_w):
            arr.setflags(write=False)

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class PowerAlloc:
    """Per-link powers with the resulting SINR, capped rate, and WSR."""

    powers_w: np.ndarray
    sinr: np.ndarray
    rate_bps: np.ndarray
    wsr_bps: float

    def __post_init__(self) -> None:
        for arr in (self.powers_w, self.sinr, self.rate_bps):
            arr.setflags(write=False)


def build_link_problem(topology: Topology, schedule: Schedule) -> LinkProblem:
    """Resolve a schedule against a topology into its N-link problem."""
    cfg = topology.config
    n = cfg.n_cells
    if len(schedule.choices) != n:
        raise ValueError(
            f"schedule has {len(schedule.choices)} cells, topology has {n}"
        )
    tx_idx = np.empty(n, dtype=int)
    rx_idx = np.empty(n, dtype=int)
    weights = np.empty(n)
    directions = np.empty(n, dtype=int)
    noise = np.empty(n)
    p_max = np.empty(n)
    noise_at = {
        NodeKind.BS: noise_power_w(cfg, NodeKind.BS),
        NodeKind.UE: noise_power_w(cfg, NodeKind.UE),
    }
    for c, (slot, direction) in enumerate(schedule.choices):
        bs = topology.bs_node(c)
        ue = topology.ue_node(c, slot)
        ue_i = topology.ue_index(c, slot)
        if direction == Direction.DOWNLINK:
            tx, rx = bs, ue
            weights[c] = topology.weights[2 * ue_i]
            directions[c] = 1
        else:
            tx, rx = ue, bs
            weights[c] = topology.weights[2 * ue_i + 1]
            directions[c] = 0
        tx_idx[c] = tx.id
        rx_idx[c] = rx.id
        noise[c] = noise_at[rx.kind]
        p_max[c] = tx.max_power_w
    # gains[i, j] = topology gain from tx of link j to rx of link i
    g = topology.gains[np.ix_(tx_idx, rx_idx)].T.copy()
    return LinkProblem(
        gains=g,
        weights=weights,
        directions=directions,
        noise_w=noise,
        p_max_w=p_max,
        bandwidth_hz=cfg.bandwidth_hz,
        se_cap_bps_hz=cfg.se_cap_bps_hz,
    )


def evaluate(problem: LinkProblem, powers_w: np.ndarray) -> PowerAlloc:
    """SINR, capped per-link rate, and WSR at the given transmit powers.

    Powers must satisfy the box 0 <= p <= p_max (tiny float slack allowed).
    """
    p = np.asarray(powers_w, dtype=float)
    if p.shape != (problem.n_links,):
        raise ValueError(f"expected {problem.n_links} powers, got shape {p.shape}")
    slack = 1e-9 * problem.p_max_w
    if np.any(p < -slack) or np.any(p > problem.p_max_w + slack):
        raise ValueError("powers violate the box constraint [0, p_max]")
    p = np.clip(p, 0.0, problem.p_max_w)
    g = problem.gains
    signal = np.diag(g) * p
    interference = g @ p - signal
    sinr = signal / (interference + problem.noise_w)
    se = np.minimum(np.log2(1.0 + sinr), problem.se_cap_bps_hz)
    rate = problem.bandwidth_hz * se
    wsr = float(problem.weights @ rate)
    return PowerAlloc(powers_w=p, sinr=sinr, rate_bps=rate, wsr_bps=wsr)


def full_power_alloc(problem: LinkProblem) -> PowerAlloc:
    return evaluate(problem, problem.p_max_w.copy())


def evaluate_stacked(
    gains: np.ndarray,
    noise_w: np.ndarray,
    weights: np.ndarray,
    p_max_w: np.ndarray,
    bandwidth_hz: float,
    se_cap_bps_hz: float,
    powers_w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized evaluation over stacked problems: (S,N,N) gains, (S,N) rest.

    Returns (wsr_bps, sinr, rate_bps); powers are clipped into the box. May
    differ from scalar ``evaluate`` in the last bits, so decision paths that
    need bit-exact parity with per-problem evaluation should loop instead.
    """
    n = gains.shape[-1]
    p = np.clip(np.asarray(powers_w, dtype=float), 0.0, p_max_w)
    diag = gains[:, np.arange(n), np.arange(n)]
    signal = diag * p
    interference = (gains * p[:, None, :]).sum(axis=2) - signal
    sinr = signal / (interference + noise_w)
    rate = bandwidth_hz * np.minimum(np.log2(1.0 + sinr), se_cap_bps_hz)
    wsr = (weights * rate).sum(axis=1)
    return wsr, sinr, rate


def evaluate_batch(
    problems: Sequence[LinkProblem], powers_w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized evaluation of one power vector per problem (see evaluate_stacked)."""
    if not problems:
        raise ValueError("no problems to evaluate")
    n = problems[0].n_links
    p = np.asarray(powers_w, dtype=float)
    if p.shape != (len(problems), n):
        raise ValueError(f"expected powers of shape {(len(problems), n)}")
    return evaluate_stacked(
        gains=np.stack([pr.gains for pr in problems]),
        noise_w=np.stack([pr.noise_w for pr in problems]),
        weights=np.stack([pr.weights for pr in problems]),
        p_max_w=np.stack([pr.p_max_w for pr in problems]),
        bandwidth_hz=problems[0].bandwidth_hz,
        se_cap_bps_hz=problems[0].se_cap_bps_hz,
        powers_w=p,
    )


def best_schedule_by(
    evaluator: Callable[[Schedule], float], schedules: Iterable[Schedule]
) -> tuple[Schedule, float]:
    """Argmax of ``evaluator`` over schedules; ties go to the lowest flat index."""
    best: tuple[Schedule, float] | None = None
    for sched in schedules:
        wsr = evaluator(sched)
        if (
            best is None
            or wsr > best[1]
            or (wsr == best[1] and sched.flat_index < best[0].flat_index)
        ):
            best = (sched, wsr)
    if best is None:
        raise ValueError("no schedules to compare")
    return best
