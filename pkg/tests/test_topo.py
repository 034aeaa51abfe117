import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import cellsched as cs
from cellsched.topo import (
    NodeKind,
    PathLossKind,
    gain_linear,
    topology_from_dict,
    topology_to_dict,
)


@pytest.mark.parametrize(
    "kind,distance,expected_db",
    [
        (PathLossKind.BS_UE_LOS, 100.0, 82.9),
        (PathLossKind.BS_UE_NLOS, 100.0, 107.9),
        (PathLossKind.UE_UE, 40.0, 70.4912),
        (PathLossKind.UE_UE, 200.0, 147.8212),
        (PathLossKind.BS_BS, 100.0, 107.9),  # reuses the NLOS law
    ],
)
def test_path_loss_values(kind, distance, expected_db):
    assert cs.path_loss_db(kind, distance) == pytest.approx(expected_db, abs=1e-3)


def test_path_loss_rejects_non_positive_distance():
    with pytest.raises(ValueError):
        cs.path_loss_db(PathLossKind.BS_UE_LOS, 0.0)
    with pytest.raises(ValueError):
        cs.path_loss_db(PathLossKind.UE_UE, -3.0)


@given(
    kind=st.sampled_from(list(PathLossKind)),
    d1=st.floats(min_value=1.0, max_value=5000.0),
    factor=st.floats(min_value=1.01, max_value=3.0),
)
def test_path_loss_monotone_within_branch(kind, d1, factor):
    d2 = d1 * factor
    if kind == PathLossKind.UE_UE and (d1 <= 50.0) != (d2 <= 50.0):
        return  # the two UE-UE branches are separate laws
    assert cs.path_loss_db(kind, d2) > cs.path_loss_db(kind, d1)


def test_ue_ue_branch_boundary_jump():
    # Documented discontinuity where the far branch (meter-valued) takes over.
    near = cs.path_loss_db(PathLossKind.UE_UE, 50.0)
    far = cs.path_loss_db(PathLossKind.UE_UE, 50.0001)
    assert near == pytest.approx(72.43, abs=0.01)
    assert far == pytest.approx(123.74, abs=0.01)


def test_los_probability_values():
    assert cs.los_probability(1e-6) == pytest.approx(1.0, abs=1e-12)
    assert cs.los_probability(30.0) == pytest.approx(0.97241718, abs=1e-6)
    assert cs.los_probability(1000.0) == pytest.approx(0.0, abs=1e-10)


def test_los_probability_monotone_past_plateau():
    rs = np.linspace(30.0, 3000.0, 400)
    ps = [cs.los_probability(r) for r in rs]
    assert all(a >= b - 1e-15 for a, b in zip(ps, ps[1:]))
    assert all(0.0 <= p <= 1.0 for p in ps)


def test_gain_linear_values():
    assert gain_linear(100.0, 0.0) == pytest.approx(1e-10, rel=1e-12)
    assert gain_linear(82.9, 3.0) == pytest.approx(2.5704e-9, rel=1e-4)
    assert gain_linear(250.0, 40.0) > 0.0


def test_noise_power_values():
    cfg = cs.SystemConfig()
    assert cs.noise_power_w(cfg, NodeKind.UE) == pytest.approx(3.1623e-13, rel=1e-4)
    assert cs.noise_power_w(cfg, NodeKind.BS) == pytest.approx(6.3096e-13, rel=1e-4)
    unit = cs.SystemConfig(bandwidth_hz=1.0, ue_noise_figure_db=0.0)
    assert cs.noise_power_w(unit, NodeKind.UE) == pytest.approx(10 ** (-204.0 / 10.0))


def test_config_validation():
    with pytest.raises(ValueError):
        cs.SystemConfig(n_cells=0)
    with pytest.raises(ValueError):
        cs.SystemConfig(ue_min_dist_m=40.0, ue_max_dist_m=10.0)


def test_generate_topology_reference_defaults():
    topo = cs.generate_topology(cs.SystemConfig(), seed=7)
    assert len(topo.nodes) == 24
    assert topo.weights.shape == (40,)
    assert topo.gains.shape == (24, 24)
    kinds = [n.kind for n in topo.nodes]
    assert kinds[:4] == [NodeKind.BS] * 4 and kinds[4:] == [NodeKind.UE] * 20
    # UEs grouped by cell after association
    cells = [n.cell for n in topo.nodes[4:]]
    assert cells == sorted(cells)
    assert all(np.bincount(cells, minlength=4) == 5)


def test_generate_topology_degenerate_single_cell():
    cfg = cs.SystemConfig(n_cells=1, users_per_cell=1)
    topo = cs.generate_topology(cfg, seed=3)
    assert len(topo.nodes) == 2
    assert topo.weights.shape == (2,)
    d = math.dist(topo.nodes[0].position, topo.nodes[1].position)
    assert 10.0 <= d <= 40.0


def test_generate_topology_deterministic():
    cfg = cs.SystemConfig()
    a = cs.generate_topology(cfg, seed=11)
    b = cs.generate_topology(cfg, seed=11)
    assert np.array_equal(a.gains, b.gains)
    assert np.array_equal(a.weights, b.weights)
    assert all(
        na.position == nb.position and na.cell == nb.cell
        for na, nb in zip(a.nodes, b.nodes)
    )
    c = cs.generate_topology(cfg, seed=12)
    assert not np.array_equal(a.gains, c.gains)


@pytest.mark.parametrize("seed", range(0, 200, 10))
def test_geometry_invariants(seed):
    cfg = cs.SystemConfig()
    topo = cs.generate_topology(cfg, seed=seed)
    n = cfg.n_cells
    bs_pos = np.array([topo.nodes[c].position for c in range(n)])
    for a in range(n):
        for b in range(a + 1, n):
            assert math.dist(bs_pos[a], bs_pos[b]) >= cfg.bs_min_sep_m
    for ue in topo.nodes[n:]:
        d = math.dist(ue.position, topo.nodes[ue.cell].position)
        assert cfg.ue_min_dist_m <= d <= cfg.ue_max_dist_m
    # association is strongest-gain
    ue_rows = topo.gains[n:, :n]
    for i, ue in enumerate(topo.nodes[n:]):
        assert np.argmax(ue_rows[i]) == ue.cell
    # gains positive, finite, below unity off the diagonal
    off = ~np.eye(len(topo.nodes), dtype=bool)
    assert np.all(topo.gains[off] > 0.0)
    assert np.all(topo.gains[off] < 1.0)
    assert np.all(np.isfinite(topo.gains))
    assert np.all(np.diag(topo.gains) == 0.0)
    assert np.all((topo.weights >= 0.0) & (topo.weights <= 1.0))


def test_geometry_invariants_bulk():
    # 1000 drops at reference defaults: separation and annulus must always hold.
    cfg = cs.SystemConfig()
    n = cfg.n_cells
    for seed in range(1000):
        topo = cs.generate_topology(cfg, seed=seed)
        bs_pos = np.array([topo.nodes[c].position for c in range(n)])
        d_bs = np.hypot(
            bs_pos[:, 0][:, None] - bs_pos[:, 0][None, :],
            bs_pos[:, 1][:, None] - bs_pos[:, 1][None, :],
        )
        assert np.all(d_bs[~np.eye(n, dtype=bool)] >= cfg.bs_min_sep_m)
        for ue in topo.nodes[n:]:
            d = math.dist(ue.position, topo.nodes[ue.cell].position)
            assert cfg.ue_min_dist_m <= d <= cfg.ue_max_dist_m


def test_gain_table_reciprocal_pairs_shared():
    topo = cs.generate_topology(cs.SystemConfig(), seed=5)
    assert np.array_equal(topo.gains, topo.gains.T)


def test_geometry_infeasible_raises():
    cfg = cs.SystemConfig(n_cells=50, area_side_m=120.0, bs_min_sep_m=40.0)
    with pytest.raises(cs.GeometryInfeasibleError):
        cs.generate_topology(cfg, seed=0, max_attempts=2000)


def test_topology_json_roundtrip(tmp_path):
    topo = cs.generate_topology(cs.SystemConfig(n_cells=2, users_per_cell=2), seed=9)
    path = tmp_path / "t.json"
    cs.save_topology(topo, path)
    back = cs.load_topology(path)
    assert np.array_equal(back.gains, topo.gains)
    assert np.array_equal(back.weights, topo.weights)
    assert back.config == topo.config
    assert [n.position for n in back.nodes] == [n.position for n in topo.nodes]


def test_topology_dict_version_check():
    topo = cs.generate_topology(cs.SystemConfig(n_cells=1, users_per_cell=1), seed=1)
    data = topology_to_dict(topo)
    data["format_version"] = 99
    with pytest.raises(ValueError):
        topology_from_dict(data)


def test_channel_gain_linear_node_wrapper():
    topo = cs.generate_topology(cs.SystemConfig(), seed=2)
    bs, ue = topo.nodes[0], topo.nodes[4]
    g_los = cs.channel_gain_linear(bs, ue, shadow_db=0.0, los=True)
    g_nlos = cs.channel_gain_linear(bs, ue, shadow_db=0.0, los=False)
    assert 0.0 < g_nlos < g_los  # NLOS has more loss at any BS-UE distance
    with pytest.raises(ValueError):
        cs.channel_gain_linear(bs, bs, shadow_db=0.0)
