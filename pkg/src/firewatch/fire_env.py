"""Ground-truth fire environment: fuel dynamics, stochastic spread, spotting, sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .region import FuelParams, RegionGrid, WindState, disk_offsets, offset_bearing

FT_PER_M = 1.0 / 0.3048
MS_TO_FT_MIN = 60.0 * FT_PER_M
MS_TO_MPH = 2.2369362920544


@dataclass(frozen=True)
class SpreadParams:
    p_spot: float = 0.02
    lambda_spot: float = 1.0 / 200.0
    ros_scale: float = 1.9
    dt_min: float = 10.0
    ros_sigma: float = 0.3  # lognormal noise on each sampled spread length
    moisture_ext: float = 0.25
    wind_reduction: float = 0.4  # 10 m wind to midflame wind
    # length-to-breadth ratio LB(U) = a0*exp(a1*U) + a2*exp(-a3*U) - a4, U in mph
    lb_coeffs: tuple = (0.936, 0.2566, 0.461, 0.1548, 0.397)
    cutoff_zones: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.p_spot <= 1.0:
            raise ValueError("p_spot must lie in [0, 1]")
        if self.lambda_spot <= 0 or self.dt_min <= 0:
            raise ValueError("lambda_spot and dt_min must be positive")
        if self.ros_scale <= 0 or self.ros_sigma < 0 or self.moisture_ext <= 0:
            raise ValueError("invalid spread parameters")


@dataclass
class EnvState:
    H: np.ndarray
    Q: np.ndarray
    D: np.ndarray
    K: np.ndarray
    extinguished: np.ndarray  # boolean mask
    t: int = 0

    def copy(self) -> "EnvState":
        return EnvState(self.H.copy(), self.Q.copy(), self.D.copy(), self.K.copy(),
                        self.extinguished.copy(), self.t)

    @property
    def extinguished_set(self) -> set[int]:
        return set(np.flatnonzero(self.extinguished).tolist())

    def check(self, grid: RegionGrid) -> None:
        """Raise AssertionError if any state invariant is violated."""
        assert np.array_equal(self.H + self.Q + self.D, grid.eta), "fuel not conserved"
        assert (self.H >= 0).all() and (self.Q >= 0).all() and (self.D >= 0).all()
        assert np.array_equal(self.K, self.Q > 0), "K must equal Q > 0"
        assert not (self.extinguished & self.K).any(), "extinguished zone burning"

    @classmethod
    def unburnt(cls, grid: RegionGrid) -> "EnvState":
        n = grid.n_zones
        return cls(grid.eta.copy(), np.zeros(n, np.int64), np.zeros(n, np.int64),
                   np.zeros(n, bool), np.zeros(n, bool), 0)

    def ignite(self, grid: RegionGrid, zones) -> "EnvState":
        """Light healthy zones with their initial burning fuel."""
        s = self.copy()
        z = np.asarray(list(zones), dtype=np.int64)
        z = z[~s.extinguished[z] & ~s.K[z]]
        q = np.minimum(np.asarray(grid.fuel.Q_init_z, np.int64)[z], s.H[z])
        s.H[z] -= q
        s.Q[z] += q
        s.K = s.Q > 0
        return s


@dataclass(frozen=True)
class Adjacency:
    """Sparse realised spread edges ``src -> dst`` (self-loops implicit)."""

    src: np.ndarray
    dst: np.ndarray
    n: int

    def to_sparse(self):
        from scipy import sparse

        data = np.ones(self.src.size, dtype=np.int8)
        # row = target z, column = source z', matching a_{z z'}
        return sparse.csr_matrix((data, (self.dst, self.src)), shape=(self.n, self.n))

    def __len__(self):
        return int(self.src.size)


@dataclass(frozen=True)
class Observation:
    zones: np.ndarray
    y: np.ndarray

    @classmethod
    def empty(cls) -> "Observation":
        return cls(np.zeros(0, np.int64), np.zeros(0))


# --- rate of spread -----------------------------------------------------------

def _no_wind_terms(fuel: FuelParams, moisture_ext: float):
    """Reaction-intensity based no-wind ROS (ft/min) plus the packing terms the wind factor needs."""
    w0 = np.asarray(fuel.kappa_load, float)
    sav = np.asarray(fuel.kappa_SAV, float)
    depth = np.asarray(fuel.kappa_depth, float)
    mf = np.asarray(fuel.kappa_moist, float)
    heat = np.asarray(fuel.kappa_heat, float)
    rho_p = np.asarray(fuel.kappa_dens, float)
    st = np.asarray(fuel.m_tot, float)
    se = np.asarray(fuel.m_eff, float)

    rho_b = w0 / depth
    beta = rho_b / rho_p
    beta_op = 3.348 * sav ** -0.8189
    ratio = beta / beta_op
    a = 133.0 * sav ** -0.7913
    gamma_max = sav ** 1.5 / (495.0 + 0.0594 * sav ** 1.5)
    gamma = gamma_max * ratio ** a * np.exp(a * (1.0 - ratio))
    wn = w0 * (1.0 - st)
    rm = np.minimum(mf / moisture_ext, 1.0)
    eta_m = np.clip(1.0 - 2.59 * rm + 5.11 * rm**2 - 3.52 * rm**3, 0.0, None)
    eta_s = np.minimum(0.174 * se ** -0.19, 1.0)
    i_r = gamma * wn * heat * eta_m * eta_s
    xi = np.exp((0.792 + 0.681 * sav**0.5) * (beta + 0.1)) / (192.0 + 0.2595 * sav)
    eps = np.exp(-138.0 / sav)
    q_ig = 250.0 + 1116.0 * mf
    r0 = i_r * xi / (rho_b * eps * q_ig)
    return r0, beta, ratio, sav


def directional_factor(theta, speed_ms, params: SpreadParams):
    """Elliptical attenuation (1-e)/(1-e cos theta); identically 1 in calm air."""
    a0, a1, a2, a3, a4 = params.lb_coeffs
    u = np.asarray(speed_ms, float) * params.wind_reduction * MS_TO_MPH
    lb = np.maximum(a0 * np.exp(a1 * u) + a2 * np.exp(-a3 * u) - a4, 1.0)
    e = np.sqrt(1.0 - 1.0 / lb**2)
    return (1.0 - e) / (1.0 - e * np.cos(theta))


def _ros(fuel: FuelParams, speed, phi, psi, slope, params: SpreadParams):
    r0, beta, ratio, sav = _no_wind_terms(fuel, params.moisture_ext)
    u_ft = np.asarray(speed, float) * params.wind_reduction * MS_TO_FT_MIN
    c = 7.47 * np.exp(-0.133 * sav**0.55)
    b = 0.02526 * sav**0.54
    e = 0.715 * np.exp(-3.59e-4 * sav)
    phi_w = c * u_ft**b * ratio ** -e
    phi_s = 5.275 * beta ** -0.3 * np.maximum(np.asarray(slope, float), 0.0) ** 2
    g = directional_factor(np.asarray(psi) - phi, speed, params)
    return params.ros_scale * r0 / FT_PER_M * (1.0 + phi_w + phi_s) * g


def rothermel_ros(fuel_from: FuelParams, fuel_to: FuelParams, wind: WindState, psi,
                  slope, params: SpreadParams = SpreadParams()):
    """Rate of spread (m/min) from one zone toward another along bearing ``psi``.

    Fuel inputs are averaged between the two zones. ``slope`` is rise over run in the
    direction of travel; only upslope travel accelerates the fire.
    """
    out = _ros(fuel_from.averaged(fuel_to), wind.speed_U, wind.direction_phi, psi, slope, params)
    return float(out) if np.ndim(out) == 0 else out


# --- spread sampling ----------------------------------------------------------

def _candidate_pairs(burning: np.ndarray, grid: RegionGrid, params: SpreadParams, extinguished):
    off = disk_offsets(params.cutoff_zones * grid.zone_size_m, grid.zone_size_m)
    off = off[(off[:, 0] != 0) | (off[:, 1] != 0)]
    r, c = np.divmod(burning, grid.width)
    rr = r[:, None] + off[None, :, 0]
    cc = c[:, None] + off[None, :, 1]
    ok = (rr >= 0) & (rr < grid.height) & (cc >= 0) & (cc < grid.width)
    src = np.broadcast_to(burning[:, None], rr.shape)[ok]
    dst = (rr * grid.width + cc)[ok]
    k = np.broadcast_to(np.arange(len(off))[None, :], rr.shape)[ok]
    keep = ~extinguished[dst]
    src, dst, k = src[keep], dst[keep], k[keep]
    psi = offset_bearing(off[:, 0], off[:, 1])[k]
    dist = grid.zone_size_m * np.hypot(off[:, 0], off[:, 1])[k]
    return src, dst, np.atleast_1d(psi), dist


def spread_lengths(state: EnvState, wind: WindState, grid: RegionGrid, params: SpreadParams):
    """Deterministic spread lengths (m) for every candidate burning-source edge."""
    burning = np.flatnonzero(state.K & ~state.extinguished)
    src, dst, psi, dist = _candidate_pairs(burning, grid, params, state.extinguished)
    if src.size == 0:
        return src, dst, dist, np.zeros(0)
    fuel = grid.fuel.take(src).averaged(grid.fuel.take(dst))
    slope = grid.slope_between(src, dst)
    ros = _ros(fuel, wind.speed_U, wind.direction_phi, psi, slope, params)
    return src, dst, dist, np.atleast_1d(ros) * params.dt_min


def edge_probability(length, dist, params: SpreadParams):
    """Pr[L * exp(sigma * eps) >= d] for the lognormal edge noise."""
    length = np.asarray(length, float)
    if params.ros_sigma == 0:
        return (length >= dist).astype(float)
    with np.errstate(divide="ignore"):
        return ndtr(np.log(length / dist) / params.ros_sigma)


def sample_adjacency(state: EnvState, wind: WindState, grid: RegionGrid,
                     params: SpreadParams, rng: np.random.Generator) -> Adjacency:
    src, dst, dist, length = spread_lengths(state, wind, grid, params)
    if src.size == 0:
        return Adjacency(src, dst, grid.n_zones)
    noisy = length * np.exp(params.ros_sigma * rng.standard_normal(src.size))
    hit = noisy >= dist
    return Adjacency(src[hit], dst[hit], grid.n_zones)


def sample_spotting(state: EnvState, wind: WindState, grid: RegionGrid,
                    params: SpreadParams, rng: np.random.Generator) -> set[int]:
    burning = np.flatnonzero(state.K & ~state.extinguished)
    if burning.size == 0 or params.p_spot == 0:
        return set()
    fires = burning[rng.random(burning.size) < params.p_spot]
    if fires.size == 0:
        return set()
    dist = rng.exponential(1.0 / params.lambda_spot, size=fires.size)
    centers = grid.centers()[fires]
    east = centers[:, 0] + dist * math.sin(wind.direction_phi)
    north = centers[:, 1] + dist * math.cos(wind.direction_phi)
    out = set()
    for e, n in zip(east, north):
        z = grid.contains_point(e, n)
        if z is not None and not state.extinguished[z]:
            out.add(z)
    return out


# --- helicopter and transition ----------------------------------------------

def apply_extinguish(state: EnvState, target: int | None, radius_m: float, grid: RegionGrid) -> EnvState:
    """Post-decision state: the footprint's burning fuel dies and the zones are retired.

    ``target=None`` is the no-op decision used by the null policy.
    """
    s = state.copy()
    if target is None:
        return s
    fp = grid.neighbors_within(int(target), radius_m)
    s.D[fp] += s.Q[fp]
    s.Q[fp] = 0
    s.K[fp] = False
    s.extinguished[fp] = True
    return s


def largest_remainder(parts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Round rows of nonnegative reals to integers summing exactly to ``totals``.

    Ties in the fractional parts go to the earlier column.
    """
    parts = np.clip(parts, 0.0, None)
    base = np.floor(parts).astype(np.int64)
    short = totals - base.sum(axis=1)
    frac = parts - base
    order = np.argsort(-frac, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(parts.shape[1])[None, :].repeat(len(parts), 0), axis=1)
    base += rank < short[:, None]
    return base


def step_env(post: EnvState, adj: Adjacency, spot_ignitions, grid: RegionGrid) -> EnvState:
    """Advance a post-decision state one step given the realised spread and spot ignitions."""
    kx = post.K & ~post.extinguished
    reached = np.zeros(grid.n_zones, bool)
    if len(adj):
        live = kx[adj.src]
        reached[adj.dst[live]] = True
    if spot_ignitions:
        reached[np.fromiter(spot_ignitions, dtype=np.int64)] = True
    return transition(post, reached, grid)


def transition(post: EnvState, reached: np.ndarray, grid: RegionGrid) -> EnvState:
    """Fuel transition given the zones reached by fire this step (edges or spotting)."""
    kx = post.K & ~post.extinguished
    k_next = (kx | reached) & ~post.extinguished
    new = k_next & ~kx

    lam = np.asarray(grid.fuel.lambda_z, float)
    xi = np.asarray(grid.fuel.xi_z, float)
    qinit = np.asarray(grid.fuel.Q_init_z, float)
    Q = post.Q * kx
    H = post.H.astype(float)
    D = post.D.astype(float) + post.Q * ~kx
    ignite = np.minimum(lam * Q * H, H)
    start = np.where(new, np.minimum(qinit, H), 0.0)
    Qr = Q - xi * Q + ignite + start
    Hr = H - ignite - start
    Dr = D + xi * Q

    changed = kx | new
    out = post.copy()
    out.t = post.t + 1
    if changed.any():
        idx = np.flatnonzero(changed)
        parts = np.column_stack([Qr[idx], Hr[idx], Dr[idx]])
        # the integer part of dead fuel never shrinks: D is only ever added to
        rounded = largest_remainder(parts, grid.eta[idx])
        out.Q[idx], out.H[idx], out.D[idx] = rounded[:, 0], rounded[:, 1], rounded[:, 2]
    out.K = out.Q > 0
    return out


def observe(state: EnvState, drone_pos: int, rho_obs_m: float, sigma_noise: float,
            grid: RegionGrid, rng: np.random.Generator) -> Observation:
    zones = grid.neighbors_within(int(drone_pos), rho_obs_m)
    c = np.asarray(grid.fuel.c_z, float)[zones]
    y = c * state.Q[zones]
    if sigma_noise > 0:
        y = y + sigma_noise * rng.standard_normal(zones.size)
    return Observation(zones, y.astype(float))


def step_cost(next_state: EnvState, drone_failed: bool, c_fail: float, grid: RegionGrid) -> float:
    r = np.asarray(grid.fuel.r_z, float)
    return float(np.dot(r, next_state.Q)) + (c_fail if drone_failed else 0.0)
