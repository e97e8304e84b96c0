import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firewatch.belief import BeliefState, GpcParams, SpreadKernelParams
from firewatch.drone import (DroneContext, DronePolicy, DronePolicyParams, DroneState,
                             LookaheadProblem, build_lookahead_ie, build_lookahead_ts, home_hops,
                             ie_dla_decide, interval_estimation_map, pfa_cfa_decide,
                             pfa_return_home, solve_chain_dp, terminal_penalty, ts_dla_decide)
from firewatch.heli import HeliPolicy, HeliPolicyParams
from firewatch.region import WindModelParams, WindState, uniform_region
from oracles import enumerate_chain, fov_matrix


def _state(pos, steps, B, wind=WindState(3.0, 0.0)):
    return DroneState(pos, 10.0 * steps, wind, B)


def _ctx(grid, heli="NULL", c_fail=1000.0):
    kp = SpreadKernelParams()
    return DroneContext(grid, kp, GpcParams(), WindModelParams(), HeliPolicy(HeliPolicyParams(heli), kp, grid), c_fail)


def _problem(rng, pairwise, w=5, h=5, H=3):
    n = w * h
    d_max = float(rng.choice([30.0, 45.0, 60.0, 90.0]))
    rho = float(rng.choice([0.0, 30.0, 45.0, 60.0]))
    node = rng.normal(size=(H, n)) * 5
    sigma = rng.random((H, n)) * 3 if pairwise else np.zeros((H, n))
    term = np.where(rng.random(n) < 0.3, 10.0, 0.0)
    start = int(rng.integers(n))
    return LookaheadProblem(node, sigma, term, start, w, h, 30.0, d_max, rho, pairwise, pairwise)


# --- PFA / interval estimation ---------------------------------------------------

def test_pfa_trigger_examples():
    g = uniform_region(40, 40, home=39 * 40)  # bottom-left corner
    B = BeliefState.healthy(1600)
    assert not pfa_return_home(_state(g.home, 1, B), 360.0, g)
    near = g.home - 40  # 30 m north of home
    assert pfa_return_home(_state(near, 1, B), 360.0, g)
    far = g.home - 36 * 40  # 1080 m north
    assert not pfa_return_home(_state(far, 4, B), 360.0, g)
    assert pfa_return_home(_state(far, 3, B), 360.0, g)


def test_interval_estimation_examples():
    g = uniform_region(3, 1, r_z=2.0)
    B = BeliefState.healthy(3)
    B.pQ = np.array([0.0, 1.0, 0.5])
    m = interval_estimation_map(B, 0.75, g)
    assert m.tolist() == pytest.approx([0.0, 200.0, 107.5])


def test_pfa_cfa_return_home():
    g = uniform_region(20, 20, home=390)
    B = BeliefState.healthy(400)
    B.pQ[0] = 0.5
    S = _state(390 - 40, 1, B)
    assert pfa_cfa_decide(S, DronePolicyParams("PFA-CFA"), g) == g.home


def test_pfa_cfa_hot_zone_in_reach():
    g = uniform_region(20, 20, home=390)
    B = BeliefState.healthy(400)
    B.pQ[:] = 0.0
    B.pH[:] = 1.0
    hot = 8 * 20 + 10
    B.pQ[hot], B.pH[hot] = 0.5, 0.5
    S = _state(10 * 20 + 10, 12, B)
    assert pfa_cfa_decide(S, DronePolicyParams("PFA-CFA", rho_obs_m=0.0), g) == hot


def test_pfa_cfa_projection_oracle():
    g = uniform_region(20, 20, home=390)
    B = BeliefState.healthy(400)
    hot = 0
    B.pQ[hot], B.pH[hot] = 0.5, 0.5
    start = 15 * 20 + 15
    S = _state(start, 12, B)
    got = pfa_cfa_decide(S, DronePolicyParams("PFA-CFA", rho_obs_m=0.0, d_max_m=90.0), g)
    # exhaustive projection: reachable zone nearest the hot zone, ties by index
    cand = [z for z in range(400) if g.distance(start, z) <= 90.0 + 1e-9]
    best = min(cand, key=lambda z: (float(g.distance(z, hot)), z))
    assert got == best


def test_home_hops_bfs():
    g = uniform_region(10, 10, home=95)
    hops = home_hops(g, 60.0)
    # plain breadth-first search over the reach graph
    ref = {95: 0}
    frontier = [95]
    while frontier:
        nxt = []
        for a in frontier:
            for b in range(100):
                if b not in ref and g.distance(a, b) <= 60.0 + 1e-9:
                    ref[b] = ref[a] + 1
                    nxt.append(b)
        frontier = nxt
    assert [int(hops[z]) for z in range(100)] == [ref[z] for z in range(100)]


# --- chain DP -------------------------------------------------------------------

def test_dp_single_stage():
    rng = np.random.default_rng(0)
    n = 25
    node = rng.normal(size=(1, n))
    P = LookaheadProblem(node, np.zeros((1, n)), np.zeros(n), 12, 5, 5, 30.0, 30.0, 30.0, False, False)
    path, val = solve_chain_dp(P)
    cand = [7, 11, 12, 13, 17]
    best = max(cand, key=lambda z: (node[0, z], -z))
    assert path == [best] and val == pytest.approx(node[0, best])


def test_dp_uniform_tie_break():
    n = 25
    P = LookaheadProblem(np.ones((3, n)), np.zeros((3, n)), np.zeros(n), 12, 5, 5, 30.0, 30.0, 0.0,
                         False, False)
    path, val = solve_chain_dp(P)
    assert val == pytest.approx(3.0)
    assert path == [7, 2, 1]
    P.home = 24
    path, _ = solve_chain_dp(P)
    assert path == [13, 18, 19]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.booleans())
def test_dp_matches_enumeration(seed, pairwise):
    rng = np.random.default_rng(seed)
    P = _problem(rng, pairwise)
    path, val = solve_chain_dp(P)
    ref_val, ref_path = enumerate_chain(P.node_reward, P.sigma, P.terminal, P.start, 5, 5, 30.0,
                                        P.d_max_m, P.rho_obs_m, pairwise, pairwise)
    assert val == pytest.approx(ref_val, abs=1e-9)
    assert path[0] == ref_path[0]
    assert P.path_value(path) == pytest.approx(ref_val, abs=1e-9)


def test_dp_monotone_in_node_reward():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = _problem(rng, True)
        _, v0 = solve_chain_dp(P)
        s, z = int(rng.integers(3)), int(rng.integers(25))
        P.node_reward[s, z] += float(rng.random()) * 4
        _, v1 = solve_chain_dp(P)
        assert v1 >= v0 - 1e-12


def test_dp_moves_within_reach():
    rng = np.random.default_rng(6)
    for _ in range(20):
        P = _problem(rng, True)
        path, _ = solve_chain_dp(P)
        prev = P.start
        for z in path:
            dr, dc = divmod(z, 5)[0] - divmod(prev, 5)[0], z % 5 - prev % 5
            assert math.hypot(dr, dc) * 30.0 <= P.d_max_m + 1e-9
            prev = z


def test_penalty_identical_and_disjoint():
    n = 25
    sigma = np.tile(np.arange(n, dtype=float), (2, 1))
    P = LookaheadProblem(np.zeros((2, n)), sigma, np.zeros(n), 12, 5, 5, 30.0, 60.0, 30.0, True, True)
    M = fov_matrix(5, 5, 30.0, 30.0)
    assert P.penalty(1, 12, 12) == pytest.approx(float(M[:, 12] @ sigma[1]))
    assert P.penalty(1, 0, 24) == 0.0
    P.sigma[:] = 0
    assert P.penalty(1, 12, 12) == 0.0


def test_infinite_fail_cost_plan_returns_home():
    g = uniform_region(9, 9, home=76)
    rng = np.random.default_rng(7)
    for _ in range(10):
        node = rng.normal(size=(3, 81)) * 100
        term = terminal_penalty(g, 60.0, 0, 1e12)
        P = LookaheadProblem(node, np.zeros((3, 81)), term, int(rng.choice(np.flatnonzero(home_hops(g, 60.0) <= 3))),
                             9, 9, 30.0, 60.0, 30.0, False, False)
        path, _ = solve_chain_dp(P)
        assert home_hops(g, 60.0)[path[-1]] == 0


# --- lookahead builders -------------------------------------------------------------

def _hot_belief(n, zones, pq=0.3, pk=0.9):
    B = BeliefState.healthy(n)
    for z in zones:
        B.pK[z], B.pQ[z], B.pH[z] = pk, pq, 1 - pq
    return B


def test_ie_zero_theta_has_no_pairwise():
    g = uniform_region(10, 10, home=95)
    B = _hot_belief(100, [33, 34])
    P = build_lookahead_ie(_state(95, 12, B), _ctx(g), DronePolicyParams(theta_IE=(0.0,)))
    assert not P.sigma.any()


def test_ie_objective_matches_matrix_form():
    g = uniform_region(5, 5, home=22)
    B = _hot_belief(25, [6, 7, 12], pq=0.4)
    params = DronePolicyParams(theta_IE=(0.5, 1.0, 2.0), rho_obs_m=30.0, d_max_m=60.0)
    P = build_lookahead_ie(_state(22, 12, B), _ctx(g), params)
    path, val = solve_chain_dp(P)
    M = fov_matrix(5, 5, 30.0, 30.0)
    x = [np.eye(25)[z] for z in [P.start] + path]
    direct = sum(P.node_reward[s] @ x[s + 1] - (M @ x[s]) @ np.diag(P.sigma[s]) @ (M @ x[s + 1])
                 for s in range(3)) - P.terminal @ x[-1]
    assert val == pytest.approx(direct, abs=1e-9)


def test_ts_frozen_world_has_only_terminal_terms():
    g = uniform_region(6, 6, home=33)
    B = BeliefState.healthy(36)
    params = DronePolicyParams("TS-DLA", m_scenarios=1, H=3)
    P = build_lookahead_ts(_state(33, 3, B), _ctx(g), params, np.random.default_rng(0))
    assert not P.node_reward.any()
    assert P.terminal.max() == 1000.0 and P.terminal[33] == 0.0


def test_ts_single_stage_is_one_step_expectation():
    g = uniform_region(5, 5, home=22)
    B = _hot_belief(25, [12], pq=0.3, pk=1.0)
    params = DronePolicyParams("TS-DLA", m_scenarios=400, H=1, rho_obs_m=0.0)
    P = build_lookahead_ts(_state(22, 1, B), _ctx(g), params, np.random.default_rng(1))
    assert P.H == 1
    # a burning zone with no other fire: expected change is (lambda (eta-1) pH - xi) eta pQ,
    # neighbour ignition adds Q_init times the kernel probability
    assert P.node_reward[0, 12] != 0.0


def test_no_fire_drifts_home():
    g = uniform_region(20, 20, home=390)
    B = BeliefState.healthy(400)
    S = _state(10 * 20 + 10, 3, B)
    for variant in ("IE-DLA", "TS-DLA"):
        z = DronePolicy(DronePolicyParams(variant, m_scenarios=2), _ctx(g))(S, np.random.default_rng(0))
        assert g.distance(z, g.home) < g.distance(S.position, g.home)


def test_moves_toward_distant_hotspot():
    g = uniform_region(20, 20, home=390)
    hot = 2 * 20 + 10
    B = _hot_belief(400, [hot], pq=0.3, pk=1.0)
    S = _state(390, 12, B)
    params = DronePolicyParams(theta_IE=(0.0,), H=3)
    z = ie_dla_decide(S, _ctx(g), params)
    assert g.distance(z, hot) < g.distance(S.position, hot)
    assert g.distance(z, S.position) <= params.d_max_m + 1e-9


def test_decisions_deterministic():
    g = uniform_region(12, 12, home=138)
    B = _hot_belief(144, [40, 41, 52], pq=0.2, pk=0.8)
    S = _state(138, 10, B)
    p = DronePolicyParams("TS-DLA", m_scenarios=5)
    a = ts_dla_decide(S, _ctx(g, "CFA-DLA"), p, np.random.default_rng(3))
    b = ts_dla_decide(S, _ctx(g, "CFA-DLA"), p, np.random.default_rng(3))
    assert a == b
