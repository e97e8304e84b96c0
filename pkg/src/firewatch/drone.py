"""Drone information-collection policies and the exact chain lookahead solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .belief import (BeliefState, GpcParams, SpreadKernelParams, drift_fuel, forecast_ignition,
                     forecast_weights, post_decision_belief)
from .fire_env import EnvState, transition
from .region import RegionGrid, WindModelParams, WindState
from .sampler import laplace_field_cov, sample_fuel_state, sample_ignition_field

VARIANTS = ("PFA-CFA", "TS-DLA", "IE-DLA", "STAY")
BATTERY_STEP_MIN = 10.0


@dataclass
class DroneState:
    position: int
    battery_min: float
    wind: WindState
    belief: BeliefState

    def __post_init__(self):
        if self.battery_min < 0:
            raise ValueError("battery must be nonnegative")

    @property
    def steps_left(self) -> int:
        return int(math.floor(self.battery_min / BATTERY_STEP_MIN + 1e-9))


@dataclass(frozen=True)
class DronePolicyParams:
    variant: str = "IE-DLA"
    theta_IE: tuple = (0.1, 2.5, 0.75)
    H: int = 3
    m_scenarios: int = 20
    d_max_m: float = 360.0
    rho_obs_m: float = 180.0
    couple_start: bool = True  # IE: the current field of view counts as already observed

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown drone policy {self.variant!r}")
        if self.H < 1 or self.m_scenarios < 1:
            raise ValueError("need H >= 1 and m_scenarios >= 1")
        if self.d_max_m <= 0 or self.rho_obs_m < 0:
            raise ValueError("invalid drone radii")
        object.__setattr__(self, "theta_IE", tuple(np.atleast_1d(self.theta_IE).astype(float).tolist()))

    def theta_at(self, s: int) -> float:
        th = self.theta_IE
        return th[min(s, len(th) - 1)] if th else 0.0


# --- reachability -------------------------------------------------------------

@lru_cache(maxsize=64)
def _home_hops(width: int, height: int, zone_size_m: float, d_max_m: float, home: int) -> np.ndarray:
    """Minimum number of moves from each zone to ``home`` (moves of at most ``d_max_m``)."""
    from .region import disk_offsets

    off = disk_offsets(d_max_m, zone_size_m)
    n = width * height
    hops = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    cur = np.zeros(n)
    cur[home] = 1.0
    hops[home] = 0
    k = 0
    while True:
        k += 1
        nxt = kernels.footprint_sum_flat(cur, off, (height, width)) > 0
        new = nxt & (hops == np.iinfo(np.int64).max)
        if not new.any():
            break
        hops[new] = k
        cur = nxt.astype(float)
    hops.setflags(write=False)
    return hops


def home_hops(grid: RegionGrid, d_max_m: float) -> np.ndarray:
    return _home_hops(grid.width, grid.height, float(grid.zone_size_m), float(d_max_m), int(grid.home))


def reachable(grid: RegionGrid, z: int, d_max_m: float) -> np.ndarray:
    return grid.neighbors_within(z, d_max_m)


# --- PFA / CFA -----------------------------------------------------------------

def pfa_return_home(S: DroneState, d_max_m: float, grid: RegionGrid) -> bool:
    """Trigger when the distance home exceeds what the moves after this one can cover."""
    if S.position == grid.home:
        return False
    return float(grid.distance(S.position, grid.home)) > d_max_m * (S.steps_left - 1)


def interval_estimation_map(B: BeliefState, theta_IE: float, grid: RegionGrid) -> np.ndarray:
    r = np.asarray(grid.fuel.r_z, float)
    eta = grid.eta.astype(float)
    pq = np.clip(B.pQ, 0.0, 1.0)
    return r * eta * pq + theta_IE * r * np.sqrt(eta * pq * (1.0 - pq))


def _nearest(candidates: np.ndarray, target: int, grid: RegionGrid) -> int:
    d = grid.distance(candidates, target)
    order = np.lexsort((candidates, d))
    return int(candidates[order[0]])


def step_toward_home(position: int, d_max_m: float, grid: RegionGrid) -> int:
    return _nearest(reachable(grid, position, d_max_m), grid.home, grid)


def safe_moves(S: DroneState, d_max_m: float, grid: RegionGrid) -> np.ndarray:
    """Reachable zones from which home is still reachable with the remaining moves."""
    cand = reachable(grid, S.position, d_max_m)
    ok = home_hops(grid, d_max_m)[cand] <= max(S.steps_left - 1, 0)
    return cand[ok]


def pfa_cfa_decide(S: DroneState, params: DronePolicyParams, grid: RegionGrid) -> int:
    if S.steps_left <= 0:
        return S.position
    if pfa_return_home(S, params.d_max_m, grid):
        return step_toward_home(S.position, params.d_max_m, grid)
    m = interval_estimation_map(S.belief, params.theta_at(0), grid)
    score = kernels.footprint_sum_flat(m, grid.disk_offsets(params.rho_obs_m), grid.shape)
    best = int(np.argmax(score))
    feasible = safe_moves(S, params.d_max_m, grid)
    if feasible.size == 0:
        return step_toward_home(S.position, params.d_max_m, grid)
    return _nearest(feasible, best, grid)


# --- chain lookahead -------------------------------------------------------------

@dataclass
class LookaheadProblem:
    """Chain program: pick x_0..x_{H-1}, each a move of at most d_max from the previous.

    value = sum_s node_reward[s, x_s] - pen_s(x_{s-1}, x_s) - terminal[x_{H-1}]
    where pen_s(a, b) = sum of sigma[s] over FOV(a) & FOV(b) and x_{-1} = start.
    """

    node_reward: np.ndarray  # (H, n)
    sigma: np.ndarray  # (H, n) pairwise weights; zeros for a linear program
    terminal: np.ndarray  # (n,)
    start: int
    width: int
    height: int
    zone_size_m: float
    d_max_m: float
    rho_obs_m: float
    pairwise: bool = True
    couple_start: bool = True
    home: int | None = None  # if set, near-ties go to the move closest to home
    meta: dict = field(default_factory=dict)

    @property
    def H(self) -> int:
        return self.node_reward.shape[0]

    @property
    def reach_off(self):
        from .region import disk_offsets

        return disk_offsets(self.d_max_m, self.zone_size_m)

    @property
    def fov_off(self):
        from .region import disk_offsets

        return disk_offsets(self.rho_obs_m, self.zone_size_m)

    def penalty(self, s: int, a: int, b: int) -> float:
        """Direct evaluation of pen_s(a, b) by set intersection."""
        if not self.pairwise or (s == 0 and not self.couple_start):
            return 0.0
        fa = set(_fov(a, self).tolist())
        common = [u for u in _fov(b, self).tolist() if u in fa]
        return float(np.sum(self.sigma[s][common])) if common else 0.0

    def path_value(self, path) -> float:
        total = 0.0
        prev = self.start
        for s, z in enumerate(path):
            total += self.node_reward[s, z] - self.penalty(s, prev, z)
            prev = z
        return total - self.terminal[path[-1]]


def _fov(z: int, P: LookaheadProblem) -> np.ndarray:
    r, c = divmod(int(z), P.width)
    off = P.fov_off
    rr, cc = r + off[:, 0], c + off[:, 1]
    ok = (rr >= 0) & (rr < P.height) & (cc >= 0) & (cc < P.width)
    return rr[ok] * P.width + cc[ok]


def terminal_penalty(grid: RegionGrid, d_max_m: float, steps_after: int, c_fail: float) -> np.ndarray:
    """c_fail wherever home cannot be reached with the moves left after the horizon."""
    return np.where(home_hops(grid, d_max_m) > steps_after, float(c_fail), 0.0)


def solve_chain_dp(P: LookaheadProblem, rtol: float = 1e-12) -> tuple[list[int], float]:
    """Exact optimum by backward induction.

    Near-ties at each stage go to the candidate nearest ``P.home`` when it is set, then to
    the lowest zone index, so without a home the lexicographically smallest path wins.
    """
    reach = P.reach_off
    fov = P.fov_off
    ov_ptr, ov_off = kernels.overlap_table(reach, fov)
    pairwise = bool(P.pairwise and np.any(P.sigma))
    W = kernels.chain_dp_backward(P.node_reward, P.sigma, P.terminal, reach, fov, ov_ptr, ov_off,
                                  P.width, P.height, pairwise)
    path = []
    prev = P.start
    total = 0.0
    for s in range(P.H):
        r0, c0 = divmod(prev, P.width)
        rr, cc = r0 + reach[:, 0], c0 + reach[:, 1]
        ok = (rr >= 0) & (rr < P.height) & (cc >= 0) & (cc < P.width)
        cand = (rr * P.width + cc)[ok]
        if cand.size == 0:
            raise RuntimeError("empty reach set")
        vals = W[s][cand]
        if pairwise and (s > 0 or P.couple_start):
            pen = kernels.pair_penalties(P.sigma[s], prev, reach, fov, ov_ptr, ov_off, P.width, P.height)
            vals = vals - pen[ok]
        best = vals.max()
        tol = rtol * max(1.0, abs(best))
        tied = np.flatnonzero(vals >= best - tol)
        i = int(tied[0])
        if P.home is not None and tied.size > 1:
            hr, hc = divmod(P.home, P.width)
            d2 = (rr[ok][tied] - hr) ** 2 + (cc[ok][tied] - hc) ** 2
            i = int(tied[np.argmin(d2)])  # argmin keeps the lowest index among equals
        if s == 0:
            total = float(vals[i])
        prev = int(cand[i])
        path.append(prev)
    return path, total


# --- lookahead builders -----------------------------------------------------------

@dataclass
class DroneContext:
    """Everything the drone knows besides its own state."""

    grid: RegionGrid
    kernel: SpreadKernelParams
    gpc: GpcParams
    wind_model: WindModelParams
    heli_policy: object  # callable(B, phi) -> target or None, with .footprint(target)
    c_fail: float = 1000.0


def _horizon(S: DroneState, params: DronePolicyParams) -> tuple[int, int]:
    steps = S.steps_left
    h = max(1, min(params.H, steps))
    return h, max(steps - h, 0)


def build_lookahead_ie(S: DroneState, ctx: DroneContext, params: DronePolicyParams) -> LookaheadProblem:
    grid = ctx.grid
    h, after = _horizon(S, params)
    r = np.asarray(grid.fuel.r_z, float)
    eta = grid.eta.astype(float)
    fov = grid.disk_offsets(params.rho_obs_m)
    phi = S.wind.direction_phi
    b = S.belief.copy()
    pq_root = b.pQ.copy()
    node = np.empty((h, grid.n_zones))
    sig = np.empty((h, grid.n_zones))
    for s in range(h):
        fK = forecast_ignition(b, phi, ctx.kernel, grid)
        p_start = np.clip(fK - b.pK, 0.0, 1.0)
        q, hh, d = drift_fuel(b.pQ, b.pH, b.pD, p_start, b.pK, grid)
        mu = r * eta * (q - pq_root)
        sd = r * np.sqrt(eta * q * (1.0 - q))
        th = params.theta_at(s)
        node[s] = kernels.footprint_sum_flat(mu + th * sd, fov, grid.shape)
        sig[s] = th * sd
        b = BeliefState(fK, q, hh, d, b.extinguished.copy(), b.t + 1)
        if s + 1 < h:
            target = ctx.heli_policy(b, phi)
            b = post_decision_belief(b, ctx.heli_policy.footprint(target))
    term = terminal_penalty(grid, params.d_max_m, after, ctx.c_fail)
    return LookaheadProblem(node, sig, term, S.position, grid.width, grid.height, grid.zone_size_m,
                            params.d_max_m, params.rho_obs_m, True, params.couple_start, grid.home)


def degenerate_belief(state: EnvState, grid: RegionGrid) -> BeliefState:
    eta = grid.eta.astype(float)
    return BeliefState(state.K.astype(float), state.Q / eta, state.H / eta, state.D / eta,
                       state.extinguished.copy(), state.t)


def kernel_step(post: EnvState, phi: float, kernel: SpreadKernelParams, grid: RegionGrid,
                rng: np.random.Generator) -> EnvState:
    """Assumed dynamics: independent kernel edges, so each zone ignites w.p. 1 - prod(1 - w)."""
    off, w = forecast_weights(kernel, phi, grid.zone_size_m)
    k = (post.K & ~post.extinguished).astype(float)
    p = 1.0 - kernels.neighbor_product(k.reshape(grid.shape), off, w).ravel()
    reached = rng.random(grid.n_zones) < p
    return transition(post, reached, grid)


def build_lookahead_ts(S: DroneState, ctx: DroneContext, params: DronePolicyParams,
                       rng: np.random.Generator) -> LookaheadProblem:
    grid = ctx.grid
    h, after = _horizon(S, params)
    r = np.asarray(grid.fuel.r_z, float)
    fov = grid.disk_offsets(params.rho_obs_m)
    B = S.belief
    factor = None
    if B.gp_zones.size:
        p = np.clip(B.pK[B.gp_zones], 1e-6, 1 - 1e-6)
        factor = laplace_field_cov(B.gp_zones, ctx.gpc, p * (1 - p), grid)
    ks = sample_ignition_field(B, ctx.gpc, grid, rng, factor=factor, size=params.m_scenarios)
    acc = np.zeros((h, grid.n_zones))
    for i in range(params.m_scenarios):
        world = sample_fuel_state(B, ks[i], grid, rng).to_env_state(B.extinguished, B.t)
        phi = S.wind.direction_phi
        post = world
        for s in range(h):
            if s > 0:
                target = ctx.heli_policy(degenerate_belief(post, grid), phi)
                post = post.copy()
                fp = ctx.heli_policy.footprint(target)
                post.D[fp] += post.Q[fp]
                post.Q[fp] = 0
                post.K[fp] = False
                post.extinguished[fp] = True
            phi = (phi + ctx.wind_model.sigma_phi * rng.standard_normal()) % (2 * math.pi)
            nxt = kernel_step(post, phi, ctx.kernel, grid, rng)
            acc[s] += r * (nxt.Q - post.Q)
            post = nxt
    acc /= params.m_scenarios
    node = np.stack([kernels.footprint_sum_flat(acc[s], fov, grid.shape) for s in range(h)])
    term = terminal_penalty(grid, params.d_max_m, after, ctx.c_fail)
    return LookaheadProblem(node, np.zeros_like(node), term, S.position, grid.width, grid.height,
                            grid.zone_size_m, params.d_max_m, params.rho_obs_m, False, False, grid.home)


def ie_dla_decide(S: DroneState, ctx: DroneContext, params: DronePolicyParams) -> int:
    if S.steps_left <= 0:
        return S.position
    path, _ = solve_chain_dp(build_lookahead_ie(S, ctx, params))
    return path[0]


def ts_dla_decide(S: DroneState, ctx: DroneContext, params: DronePolicyParams,
                  rng: np.random.Generator) -> int:
    if S.steps_left <= 0:
        return S.position
    path, _ = solve_chain_dp(build_lookahead_ts(S, ctx, params, rng))
    return path[0]


class DronePolicy:
    def __init__(self, params: DronePolicyParams, ctx: DroneContext):
        self.params = params
        self.ctx = ctx

    def __call__(self, S: DroneState, rng: np.random.Generator) -> int:
        v = self.params.variant
        if v == "STAY":
            return S.position
        if v == "PFA-CFA":
            return pfa_cfa_decide(S, self.params, self.ctx.grid)
        if v == "IE-DLA":
            return ie_dla_decide(S, self.ctx, self.params)
        return ts_dla_decide(S, self.ctx, self.params, rng)
