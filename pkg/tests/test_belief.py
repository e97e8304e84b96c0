import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from firewatch.belief import (BeliefState, ClassifierParams, GpcParams, SpreadKernelParams,
                              advance_belief, classification_threshold, classify_observations,
                              drift_fuel, forecast_ignition, gpc_update, logit,
                              post_decision_belief, start_burn_split, update_fuel_belief)
from firewatch.fire_env import EnvState, Observation
from firewatch.region import uniform_region
from oracles import brute_force_forecast, dense_laplace_gpc


def _belief(n, rng, ext_frac=0.0):
    pK = rng.random(n) * (rng.random(n) < 0.5)
    p = rng.dirichlet([1, 2, 1], n)
    ext = rng.random(n) < ext_frac
    pK[ext] = 0
    p[ext, 2] += p[ext, 0]
    p[ext, 0] = 0
    return BeliefState(pK, p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy(), ext)


# --- post-decision ----------------------------------------------------------------

def test_post_decision_examples():
    B = BeliefState(np.array([0.9, 0.4]), np.array([0.3, 0.1]), np.array([0.5, 0.5]),
                    np.array([0.2, 0.4]), np.zeros(2, bool))
    assert post_decision_belief(B, set()).pK.tolist() == B.pK.tolist()
    Bx = post_decision_belief(B, {0})
    assert (Bx.pK[0], Bx.pQ[0], Bx.pH[0], Bx.pD[0]) == (0.0, 0.0, 0.5, 0.5)
    assert Bx.pK[1] == 0.4 and Bx.extinguished.tolist() == [True, False]


# --- forecast -------------------------------------------------------------------

def test_forecast_trivial_cases(grid8):
    z = np.zeros(64)
    B = BeliefState(z.copy(), z.copy(), np.ones(64), z.copy(), np.zeros(64, bool))
    assert np.all(forecast_ignition(B, 0.3, SpreadKernelParams(), grid8) == 0)
    B.pK[10] = 1.0
    assert forecast_ignition(B, 0.3, SpreadKernelParams(), grid8)[10] == 1.0


def test_forecast_two_zone_closed_form():
    g = uniform_region(2, 1)
    B = BeliefState(np.array([1.0, 0.0]), np.zeros(2), np.ones(2), np.zeros(2), np.zeros(2, bool))
    f = forecast_ignition(B, 0.0, SpreadKernelParams(0.0, 0.02), g)
    # product over sources of (1 - p e^{-gamma d}); one source at 30 m
    assert f[1] == pytest.approx(math.exp(-0.6), abs=1e-12)


def test_forecast_two_zone_monte_carlo():
    rng = np.random.default_rng(0)
    n = 100_000
    lengths = rng.exponential(1 / 0.02, n)
    freq = np.mean(lengths >= 30.0)
    assert abs(freq - math.exp(-0.6)) < 3 * math.sqrt(freq * (1 - freq) / n)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 2 * math.pi))
def test_forecast_matches_direct_product(seed, phi):
    rng = np.random.default_rng(seed)
    g = uniform_region(6, 5)
    B = _belief(g.n_zones, rng)
    kp = SpreadKernelParams(0.01, 0.03)
    f = forecast_ignition(B, phi, kp, g)
    for z in range(g.n_zones):
        ref = brute_force_forecast(B.pK, 6, 5, z, 0.01, 0.03, phi)
        ref = 0.0 if B.extinguished[z] else ref
        assert f[z] == pytest.approx(ref, abs=1e-12)
    assert np.all(f >= B.pK - 1e-15)


def test_forecast_favours_downwind():
    g = uniform_region(7, 7)
    pK = np.zeros(49)
    pK[24] = 1.0
    B = BeliefState(pK, np.zeros(49), np.ones(49), np.zeros(49), np.zeros(49, bool))
    f = forecast_ignition(B, math.pi / 2, SpreadKernelParams(), g)  # wind toward east
    assert f[25] > f[23]


# --- classifier -------------------------------------------------------------------

def test_classifier_examples():
    ratio0 = norm.cdf(0) / norm.pdf(0)
    assert ratio0 == pytest.approx(1.2533141, abs=1e-6)
    assert not classify_observations([0.0], ClassifierParams(1.0, 2.0))[0]
    assert classify_observations([0.0], ClassifierParams(1.0, 1.2))[0]
    assert classify_observations([1e6], ClassifierParams(1.0, 1e300))[0]


def test_classifier_is_threshold():
    p = ClassifierParams(1.0, 1000.0)
    thr = classification_threshold(p)
    ys = np.linspace(-10, 10, 20_001)
    lab = classify_observations(ys, p)
    assert np.all(np.diff(lab.astype(int)) >= 0)
    assert np.all(lab == (ys > thr))
    # direct ratio evaluation at the threshold
    assert norm.cdf(thr) / norm.pdf(thr) == pytest.approx(1000.0, rel=1e-6)


# --- GPC ------------------------------------------------------------------------

def test_gpc_no_observations(grid8, rng):
    f = rng.random(64)
    res = gpc_update(f, np.zeros(0, np.int64), np.zeros(0, bool), GpcParams(), grid8)
    np.testing.assert_array_equal(res.pK, f)


def test_gpc_observed_take_label(grid8, rng):
    f = rng.random(64)
    res = gpc_update(f, np.array([3, 9]), np.array([True, False]), GpcParams(), grid8)
    assert res.pK[3] == 1.0 and res.pK[9] == 0.0 and res.converged


def test_gpc_kernel_collapse():
    g = uniform_region(5, 5)
    f = np.full(25, 0.2)
    p = GpcParams(theta_cov0=1e-12, theta_cov1=1e3, theta_cov2=1e-12)
    res = gpc_update(f, np.array([12]), np.array([False]), p, g)
    others = np.arange(25) != 12
    np.testing.assert_allclose(res.pK[others], f[others], atol=1e-6)


def test_gpc_without_correlation_has_variance_shrinkage():
    # no kernel support: the neighbour keeps the prior mean but the probit-style
    # variance correction still applies
    g = uniform_region(5, 5)
    f = np.full(25, 0.2)
    p = GpcParams(theta_cov1=1e3)
    res = gpc_update(f, np.array([12]), np.array([False]), p, g)
    var = p.theta_cov0 + p.theta_cov2
    expect = 1 / (1 + math.exp(-logit(0.2) / math.sqrt(1 + math.pi * var / 8)))
    assert res.pK[13] == pytest.approx(expect, abs=1e-9)


def test_gpc_line_matches_dense_reference():
    g = uniform_region(5, 1)
    prior = np.full(5, 0.1)
    p = GpcParams()
    res = gpc_update(prior, np.array([2]), np.array([True]), p, g)
    X = g.centers()
    test = np.array([0, 1, 3, 4])
    ref = dense_laplace_gpc(X[[2]], [1], logit(prior[[2]]), X[test], logit(prior[test]),
                            p.theta_cov0, p.theta_cov1, p.theta_cov2)
    np.testing.assert_allclose(res.pK[test], ref, atol=1e-6)
    assert res.pK[2] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gpc_matches_dense_reference_random(seed):
    rng = np.random.default_rng(seed)
    w, h = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    g = uniform_region(w, h)
    n = g.n_zones
    prior = np.clip(rng.random(n), 0, 1)
    prior[rng.random(n) < 0.2] = 0.0
    k = int(rng.integers(1, max(2, n // 2)))
    obs = np.sort(rng.choice(n, k, replace=False))
    lab = rng.random(k) < 0.5
    p = GpcParams(active_radius_m=1e4)
    res = gpc_update(prior, obs, lab, p, g)
    test = np.setdiff1d(np.arange(n), obs)
    X = g.centers()
    ref = dense_laplace_gpc(X[obs], lab.astype(float), logit(prior[obs]), X[test],
                            logit(prior[test]), p.theta_cov0, p.theta_cov1, p.theta_cov2)
    assert res.converged
    np.testing.assert_allclose(res.pK[test], ref, atol=1e-6)


def test_gpc_nonconvergence_falls_back(grid8, rng):
    f = rng.random(64)
    p = GpcParams(newton_max_iter=1, newton_tol=1e-300)
    res = gpc_update(f, np.arange(20), rng.random(20) < 0.5, p, grid8)
    assert not res.converged
    np.testing.assert_array_equal(res.pK[20:], f[20:])


# --- start/burn split ---------------------------------------------------------------------

def test_split_examples():
    ps, pb = start_burn_split([0.6], [0.2], [0.5])
    assert pb[0] == pytest.approx(0.24) and ps[0] == pytest.approx(0.36)
    ps, pb = start_burn_split([0.7], [0.0], [0.4])
    assert (ps[0], pb[0]) == (0.7, 0.0)
    ps, pb = start_burn_split([0.7], [0.4], [0.4])
    assert ps[0] == pytest.approx(0.0) and pb[0] == pytest.approx(0.7)
    ps, pb = start_burn_split([0.3], [0.0], [0.0])
    assert (ps[0], pb[0]) == (0.3, 0.0)


def test_split_bayes_monte_carlo():
    # Pr[burning before | reached] by simulation, scaled by the posterior Pr[K']
    rng = np.random.default_rng(0)
    pKx, fK, pK_next = 0.2, 0.5, 0.6
    n = 400_000
    kx = rng.random(n) < pKx
    reach = kx | (rng.random(n) < (fK - pKx) / (1 - pKx))
    ratio = kx[reach].mean()
    se = math.sqrt(ratio * (1 - ratio) / reach.sum())
    assert abs(pK_next * ratio - 0.24) < 3 * pK_next * se
    assert abs(pK_next * (1 - ratio) - 0.36) < 3 * pK_next * se


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_split_consistency(a, b, c):
    pKx, fK = min(a, b), max(a, b)
    ps, pb = start_burn_split([c], [pKx], [fK])
    assert abs(ps[0] + pb[0] - c) <= 2 * np.spacing(1.0)
    assert 0 <= ps[0] <= 1 and 0 <= pb[0] <= 1


# --- fuel belief ------------------------------------------------------------------

def test_fuel_observed_branch():
    g = uniform_region(2, 1)
    B = BeliefState.healthy(2)
    q, h, d = update_fuel_belief(B, np.zeros(2), np.zeros(2), Observation(np.array([0]), np.array([30.0])), g)
    assert (q[0], h[0], d[0]) == pytest.approx((0.3, 0.7, 0.0))


def test_fuel_no_fire_limit():
    g = uniform_region(1, 1)
    q, h, d = drift_fuel(np.array([0.2]), np.array([0.5]), np.array([0.3]), np.zeros(1), np.zeros(1), g)
    assert (q[0], h[0], d[0]) == pytest.approx((0.0, 0.5, 0.5))


def test_fuel_burning_arithmetic():
    g = uniform_region(1, 1, lambda_z=0.002, xi_z=0.1)
    q, h, d = drift_fuel(np.array([0.2]), np.array([0.7]), np.array([0.1]), np.zeros(1), np.ones(1), g)
    assert q[0] == pytest.approx((1 - 0.1 + 0.002 * 99 * 0.7) * 0.2)
    assert q[0] == pytest.approx(0.2077, abs=1e-4)


def _fuel_monte_carlo(eta, lam, xi, qinit, p, p_start, p_burn, n, rng):
    """Sample means of the real-valued fuel transition over multinomial states."""
    Q, H, D = rng.multinomial(eta, p, size=n).T.astype(float)
    u = rng.random(n)
    burn = u < p_burn
    start = (u >= p_burn) & (u < p_burn + p_start)
    ign = lam * Q * H
    Qn = np.where(burn, Q - xi * Q + ign, np.where(start, qinit, 0.0))
    Hn = np.where(burn, H - ign, np.where(start, H - qinit, H))
    Dn = np.where(burn, D + xi * Q, D + Q)
    return [x / eta for x in (Qn, Hn, Dn)]


def test_fuel_drift_monte_carlo():
    rng = np.random.default_rng(0)
    eta, lam, xi, qinit = 100, 0.006, 0.15, 8
    g = uniform_region(1, 1, lambda_z=lam, xi_z=xi, Q_init_z=qinit)
    p = np.array([0.25, 0.6, 0.15])
    ps, pb = 0.2, 0.5
    samples = _fuel_monte_carlo(eta, lam, xi, qinit, p, ps, pb, 100_000, rng)
    out = drift_fuel(*(np.array([v]) for v in p), np.array([ps]), np.array([pb]), g)
    for s, o in zip(samples, out):
        assert abs(s.mean() - o[0]) < 3 * s.std(ddof=1) / math.sqrt(s.size)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_fuel_update_stays_on_simplex(seed):
    rng = np.random.default_rng(seed)
    g = uniform_region(6, 6, lambda_z=float(rng.uniform(0, 0.01)), xi_z=float(rng.uniform(0, 1)))
    B = _belief(36, rng, 0.2)
    pn = rng.random(36)
    fK = np.maximum(B.pK, rng.random(36))
    ps, pb = start_burn_split(pn, B.pK, fK)
    obs = Observation(np.array([1, 7]), rng.normal(20, 30, 2))
    for src in ("split", "prior"):
        q, h, d = update_fuel_belief(B, ps, pb, obs, g, src, B.pK)
        assert np.all(np.abs(q + h + d - 1) <= 1e-9)
        assert np.all((q >= 0) & (q <= 1) & (h >= 0) & (d >= 0))


# --- composed update ----------------------------------------------------------------

def _args():
    return SpreadKernelParams(), GpcParams(), ClassifierParams()


def test_advance_perfect_information():
    g = uniform_region(8, 8)
    rng = np.random.default_rng(1)
    env = EnvState.unburnt(g).ignite(g, [9, 10, 30])
    env.Q[10] = 37
    env.H[10] = 100 - 37
    B = _belief(64, rng)
    obs = Observation(np.arange(64), env.Q.astype(float))
    step = advance_belief(B, set(), obs, 0.0, *_args(), g)
    np.testing.assert_array_equal(step.result.pK, env.K.astype(float))
    np.testing.assert_allclose(step.result.pQ, env.Q / 100.0)
    step.result.check()


def test_advance_pure_drift(grid8):
    rng = np.random.default_rng(2)
    B = _belief(64, rng)
    st_ = advance_belief(B, set(), Observation.empty(), 1.0, *_args(), grid8)
    np.testing.assert_array_equal(st_.result.pK, st_.fK)
    assert st_.p_burn.sum() > 0


def test_advance_deterministic(grid8):
    rng = np.random.default_rng(3)
    B = _belief(64, rng, 0.1)
    obs = Observation(np.array([3, 4, 11]), np.array([0.2, 8.0, -1.0]))
    a = advance_belief(B, {5, 6}, obs, 2.0, *_args(), grid8).result
    b = advance_belief(B, {5, 6}, obs, 2.0, *_args(), grid8).result
    for k in ("pK", "pQ", "pH", "pD"):
        assert getattr(a, k).tobytes() == getattr(b, k).tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_advance_keeps_invariants(seed):
    rng = np.random.default_rng(seed)
    g = uniform_region(8, 8)
    B = _belief(64, rng, 0.1)
    for _ in range(3):
        zones = np.sort(rng.choice(64, 12, replace=False))
        obs = Observation(zones, rng.normal(5, 10, 12))
        fp = set(rng.choice(64, 3).tolist())
        B = advance_belief(B, fp, obs, float(rng.uniform(0, 6.3)), *_args(), g).result
        B.check(1e-9)


def test_snapshot_roundtrip(grid8):
    B = _belief(64, np.random.default_rng(4), 0.1)
    back = BeliefState.from_json(json.loads(B.dumps()))
    for k in ("pK", "pQ", "pH", "pD", "extinguished"):
        np.testing.assert_array_equal(getattr(back, k), getattr(B, k))
    with pytest.raises(ValueError):
        BeliefState.from_json({"schema": "other"})
