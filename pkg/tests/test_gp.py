import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import cellsched as cs
from cellsched.gp import inner_solve, uncapped_wsr_bps
from helpers import grid_oracle_uncapped, hand_problem, random_link_problem


def test_condense_weights():
    assert np.allclose(cs.condense_posynomial(np.array([1.0, 1.0])), [0.5, 0.5])
    assert np.allclose(cs.condense_posynomial(np.array([3.0, 1.0])), [0.75, 0.25])
    theta = cs.condense_posynomial(np.array([0.2, 0.3, 0.5]))
    assert theta.sum() == pytest.approx(1.0, rel=1e-15)


def test_condense_rejects_bad_terms():
    with pytest.raises(ValueError):
        cs.condense_posynomial(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        cs.condense_posynomial(np.array([-1.0, 2.0]))
    with pytest.raises(ValueError):
        cs.condense_posynomial(np.array([]))


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_condensation_underestimates_everywhere(seed):
    # Posynomial f(p) = sum_t c_t * p^(a_t); condensed at p0 it must lower-bound
    # f at any other point and match it at p0 (AM-GM).
    rng = np.random.default_rng(seed)
    n_terms, n_vars = rng.integers(2, 6), rng.integers(1, 4)
    c = rng.uniform(0.1, 5.0, n_terms)
    a = rng.uniform(-2.0, 2.0, (n_terms, n_vars))
    p0 = rng.uniform(0.2, 3.0, n_vars)
    p1 = rng.uniform(0.2, 3.0, n_vars)

    def posy(p):
        return float(np.sum(c * np.prod(p[None, :] ** a, axis=1)))

    terms0 = c * np.prod(p0[None, :] ** a, axis=1)
    theta = cs.condense_posynomial(terms0)

    def condensed(p):
        terms = c * np.prod(p[None, :] ** a, axis=1)
        return float(np.prod((terms / theta) ** theta))

    assert condensed(p0) == pytest.approx(posy(p0), rel=1e-12)
    assert condensed(p1) <= posy(p1) * (1.0 + 1e-12)


def test_inner_solve_interior_quadratic():
    target = np.array([0.3, -0.2])

    def f(x):
        d = x - target
        return float(d @ d), 2.0 * d

    x, ok = inner_solve(f, np.zeros(2), np.full(2, -1.0), np.full(2, 1.0))
    assert ok
    assert np.allclose(x, target, atol=1e-6)


def test_inner_solve_boundary_kkt():
    target = np.array([2.0])  # outside the box

    def f(x):
        d = x - target
        return float(d @ d), 2.0 * d

    x, ok = inner_solve(f, np.zeros(1), np.array([-1.0]), np.array([1.0]))
    assert ok
    assert x[0] == pytest.approx(1.0, abs=1e-12)
    # at the active bound the gradient points outward (KKT sign)
    _, g = f(x)
    assert g[0] < 0.0


def test_inner_solve_bad_box():
    with pytest.raises(ValueError):
        inner_solve(lambda x: (0.0, np.zeros(1)), np.zeros(1), np.array([1.0]), np.array([0.0]))


def test_gp_config_validation():
    with pytest.raises(ValueError):
        cs.GpConfig(trust_factor=1.0)
    with pytest.raises(ValueError):
        cs.GpConfig(outer_tol=0.0)
    with pytest.raises(ValueError):
        cs.GpConfig(p_floor_frac=0.0)


def test_single_link_full_power():
    prob = hand_problem([[1.0]], [1.0], [0.1], [2.5])
    res = cs.wsr_maximize(prob)
    assert res.converged
    assert res.alloc.powers_w[0] == pytest.approx(2.5, rel=1e-12)
    assert res.alloc.wsr_bps == pytest.approx(np.log2(1.0 + 25.0), rel=1e-9)


def test_symmetric_two_link_reaches_grid_optimum():
    # Symmetric instance whose true optimum is on/off; frozen 201x201 grid
    # maximum over [1e-8, 1]^2 is 3.4594316 (also recomputed here).
    prob = hand_problem([[1.0, 0.5], [0.5, 1.0]], [1.0, 1.0], [0.1, 0.1], [1.0, 1.0])
    oracle = grid_oracle_uncapped(prob, 201)
    assert oracle == pytest.approx(3.459431577105169, rel=1e-12)
    res = cs.wsr_maximize(prob)
    assert res.alloc.wsr_bps >= 0.99 * oracle


def test_strong_interference_drives_weak_link_down():
    prob = hand_problem([[1.0, 5.0], [5.0, 0.01]], [1.0, 0.01], [0.1, 0.1], [1.0, 1.0])
    res = cs.wsr_maximize(prob)
    assert res.alloc.powers_w[1] < 1e-4  # near the floor vs p_max=1
    oracle = grid_oracle_uncapped(prob, 201)
    assert uncapped_wsr_bps(prob, res.alloc.powers_w) >= 0.99 * oracle


def test_given_init():
    prob = hand_problem([[1.0, 0.2], [0.2, 1.0]], [1.0, 0.7], [0.1, 0.1], [1.0, 1.0])
    cfg = cs.GpConfig(init=cs.PowerInit.GIVEN)
    res = cs.wsr_maximize(prob, cfg, p0=np.array([0.5, 0.5]))
    assert res.alloc.wsr_bps >= uncapped_wsr_bps(prob, np.array([0.5, 0.5])) - 1e-9
    with pytest.raises(ValueError):
        cs.wsr_maximize(prob, cfg)  # GIVEN without p0


def test_wsr_maximize_deterministic():
    prob = random_link_problem(3, seed=42)
    a = cs.wsr_maximize(prob)
    b = cs.wsr_maximize(prob)
    assert np.array_equal(a.alloc.powers_w, b.alloc.powers_w)
    assert a.outer_iters == b.outer_iters


@pytest.mark.parametrize("seed", range(30, 60, 3))
def test_ascent_and_feasibility_random_problems(seed):
    prob = random_link_problem(3, seed=seed)
    res = cs.wsr_maximize(prob)
    tr = res.objective_trace
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[:-1]) - 1e-15)
    assert np.all(res.alloc.powers_w <= prob.p_max_w + 1e-12)
    assert np.all(res.alloc.powers_w >= 0.0)
    assert res.alloc.wsr_bps >= 0.0
    # never worse than the starting point (full power)
    assert tr[-1] >= tr[0] - 1e-9 * abs(tr[0])


def test_trace_starts_at_full_power_objective():
    prob = random_link_problem(2, seed=5)
    res = cs.wsr_maximize(prob)
    assert res.objective_trace[0] == pytest.approx(
        uncapped_wsr_bps(prob, prob.p_max_w), rel=1e-12
    )


def test_scale_invariance_of_argmax():
    # Jointly scaling one receiver's gains row and its noise leaves the
    # optimal powers unchanged (SINR is unchanged at every power vector).
    prob = random_link_problem(2, seed=77)
    g2 = prob.gains.copy()
    g2[0, :] *= 50.0
    n2 = prob.noise_w.copy()
    n2[0] *= 50.0
    scaled = cs.LinkProblem(
        gains=g2, weights=prob.weights.copy(), directions=prob.directions.copy(),
        noise_w=n2, p_max_w=prob.p_max_w.copy(), bandwidth_hz=prob.bandwidth_hz,
        se_cap_bps_hz=prob.se_cap_bps_hz,
    )
    a = cs.wsr_maximize(prob)
    b = cs.wsr_maximize(scaled)
    assert np.allclose(a.alloc.powers_w, b.alloc.powers_w, rtol=1e-6)


def test_wsr_maximize_input_validation():
    prob = hand_problem([[1.0]], [1.0], [0.1], [1.0])
    bad = cs.LinkProblem.__new__(cs.LinkProblem)  # bypass validation
    object.__setattr__(bad, "gains", np.array([[np.inf]]))
    object.__setattr__(bad, "weights", prob.weights)
    object.__setattr__(bad, "directions", prob.directions)
    object.__setattr__(bad, "noise_w", prob.noise_w)
    object.__setattr__(bad, "p_max_w", prob.p_max_w)
    object.__setattr__(bad, "bandwidth_hz", 1.0)
    object.__setattr__(bad, "se_cap_bps_hz", 7.0)
    with pytest.raises(ValueError):
        cs.wsr_maximize(bad)
