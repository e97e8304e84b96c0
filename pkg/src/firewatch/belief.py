"""Drone belief model: ignition forecast, observation classifier, GP classification, fuel belief."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import expit, log_ndtr

from . import kernels
from .fire_env import Observation
from .region import RegionGrid, disk_offsets, offset_bearing

P_CLAMP = 1e-6
SNAPSHOT_SCHEMA = "firewatch.belief/1"


@dataclass
class BeliefState:
    pK: np.ndarray
    pQ: np.ndarray
    pH: np.ndarray
    pD: np.ndarray
    extinguished: np.ndarray
    t: int = 0
    # zones the last GP fit covered (observed plus window); the sampler correlates these
    gp_zones: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def copy(self) -> "BeliefState":
        return BeliefState(self.pK.copy(), self.pQ.copy(), self.pH.copy(), self.pD.copy(),
                           self.extinguished.copy(), self.t, self.gp_zones.copy())

    def check(self, tol: float = 1e-9) -> None:
        s = self.pQ + self.pH + self.pD
        assert np.all(np.abs(s - 1.0) <= tol), "fuel belief off the simplex"
        for name in ("pK", "pQ", "pH", "pD"):
            v = getattr(self, name)
            assert np.all((v >= 0) & (v <= 1)), f"{name} outside [0, 1]"
        assert not np.any(self.pK[self.extinguished]), "extinguished zone with pK > 0"
        assert not np.any(self.pQ[self.extinguished]), "extinguished zone with pQ > 0"

    @classmethod
    def healthy(cls, n: int) -> "BeliefState":
        z = np.zeros(n)
        return cls(z.copy(), z.copy(), np.ones(n), z.copy(), np.zeros(n, bool), 0)

    def to_json(self) -> dict:
        return {
            "schema": SNAPSHOT_SCHEMA,
            "t": int(self.t),
            "pK": self.pK.tolist(),
            "pQ": self.pQ.tolist(),
            "pH": self.pH.tolist(),
            "pD": self.pD.tolist(),
            "extinguished": np.flatnonzero(self.extinguished).tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "BeliefState":
        if d.get("schema") != SNAPSHOT_SCHEMA:
            raise ValueError(f"unknown belief snapshot schema {d.get('schema')!r}")
        n = len(d["pK"])
        ext = np.zeros(n, bool)
        ext[np.asarray(d["extinguished"], dtype=np.int64)] = True
        return cls(*(np.asarray(d[k], float) for k in ("pK", "pQ", "pH", "pD")), ext, int(d["t"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class SpreadKernelParams:
    """gamma(psi | phi) = theta0 * cos(psi - phi) + theta1, in 1/m."""

    theta0: float = 0.03
    theta1: float = 0.05
    cutoff_zones: float = 10.0

    def __post_init__(self):
        if not 0 <= self.theta0 <= self.theta1:
            raise ValueError("kernel needs theta1 >= theta0 >= 0")


@dataclass(frozen=True)
class GpcParams:
    theta_cov0: float = 1.0  # signal variance
    theta_cov1: float = 2.5e-4  # inverse squared length scale, 1/m^2
    theta_cov2: float = 1e-2  # nugget
    newton_tol: float = 1e-8
    newton_max_iter: int = 50
    active_radius_m: float = 150.0

    def __post_init__(self):
        if min(self.theta_cov0, self.theta_cov1, self.theta_cov2, self.newton_tol) <= 0:
            raise ValueError("GPC parameters must be positive")
        if self.newton_max_iter < 1 or self.active_radius_m <= 0:
            raise ValueError("need newton_max_iter >= 1 and a positive window")


@dataclass(frozen=True)
class ClassifierParams:
    sigma_noise: float = 1.0
    threshold_l: float = 1000.0

    def __post_init__(self):
        if self.sigma_noise <= 0 or self.threshold_l <= 0:
            raise ValueError("sigma_noise and threshold_l must be positive")


def logit(p):
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    return np.log(p) - np.log1p(-p)


# --- pipeline stages ------------------------------------------------------------

def post_decision_belief(B: BeliefState, footprint) -> BeliefState:
    out = B.copy()
    fp = np.asarray(list(footprint) if isinstance(footprint, (set, frozenset)) else footprint,
                    dtype=np.int64)
    if fp.size == 0:
        return out
    out.pD[fp] += out.pQ[fp]
    out.pQ[fp] = 0.0
    out.pK[fp] = 0.0
    out.extinguished[fp] = True
    return out


def forecast_weights(theta: SpreadKernelParams, phi: float, zone_size_m: float):
    """Offsets o = z' - z and weights exp(-gamma(psi) d) with psi the bearing from z to z'."""
    off = disk_offsets(theta.cutoff_zones * zone_size_m, zone_size_m)
    d = zone_size_m * np.hypot(off[:, 0], off[:, 1])
    psi = offset_bearing(off[:, 0], off[:, 1])
    gamma = theta.theta0 * np.cos(psi - phi) + theta.theta1
    w = np.exp(-gamma * d)
    return off, w


def forecast_ignition(Bx: BeliefState, phi: float, theta: SpreadKernelParams, grid: RegionGrid) -> np.ndarray:
    off, w = forecast_weights(theta, phi, grid.zone_size_m)
    prod = kernels.neighbor_product(Bx.pK.reshape(grid.shape), off, w).ravel()
    f = 1.0 - prod
    f[Bx.extinguished] = 0.0
    # guard the self-factor bound against rounding
    return np.clip(np.maximum(f, Bx.pK), 0.0, 1.0)


def classify_observations(y, params: ClassifierParams) -> np.ndarray:
    """Likelihood-ratio rule Phi(u)/phi(u) > l with u = y / sigma, evaluated in logs."""
    u = np.asarray(y, float) / params.sigma_noise
    log_pdf = -0.5 * u * u - 0.5 * math.log(2 * math.pi)
    return log_ndtr(u) - log_pdf > math.log(params.threshold_l)


def classification_threshold(params: ClassifierParams) -> float:
    """Observation level above which a zone is classified as burning."""
    from scipy.optimize import brentq

    def g(u):
        return log_ndtr(u) + 0.5 * u * u + 0.5 * math.log(2 * math.pi) - math.log(params.threshold_l)

    lo, hi = -50.0, 50.0
    if g(lo) > 0:
        return -math.inf
    return brentq(g, lo, hi) * params.sigma_noise


@dataclass
class GpcResult:
    pK: np.ndarray
    converged: bool = True
    iterations: int = 0
    window: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    latent_mode: np.ndarray | None = None
    W: np.ndarray | None = None


def rbf(XA: np.ndarray, XB: np.ndarray, params: GpcParams) -> np.ndarray:
    d2 = ((XA[:, None, :] - XB[None, :, :]) ** 2).sum(-1)
    return params.theta_cov0 * np.exp(-params.theta_cov1 * d2)


def laplace_mode(Kxx: np.ndarray, m: np.ndarray, y: np.ndarray, params: GpcParams):
    """Posterior mode of a logistic GP with prior N(m, Kxx), labels in {-1, +1}.

    Damped Newton in the stable B = I + W^1/2 K W^1/2 form. Returns
    (f, grad, sqrtW, L, converged, iterations).
    """
    n = len(y)
    t = (y + 1) / 2
    a = np.zeros(n)
    f = m.copy()

    def objective(a_, f_):
        return -0.5 * a_ @ (f_ - m) - np.sum(np.logaddexp(0.0, -y * f_))

    psi = objective(a, f)
    converged = False
    it = 0
    for it in range(1, params.newton_max_iter + 1):
        pi = expit(f)
        W = pi * (1 - pi)
        sW = np.sqrt(W)
        grad = t - pi
        L = cholesky(np.eye(n) + sW[:, None] * Kxx * sW[None, :], lower=True)
        b = W * (f - m) + grad
        a_new = b - sW * cho_solve((L, True), sW * (Kxx @ b))
        da = a_new - a
        step = 1.0
        for _ in range(30):
            a_try = a + step * da
            f_try = Kxx @ a_try + m
            psi_try = objective(a_try, f_try)
            if psi_try >= psi - 1e-12:
                break
            step *= 0.5
        change = psi_try - psi
        dmax = np.max(np.abs(f_try - f)) if n else 0.0
        a, f, psi = a_try, f_try, psi_try
        if abs(change) < params.newton_tol and dmax < math.sqrt(params.newton_tol):
            converged = True
            break
    pi = expit(f)
    W = pi * (1 - pi)
    sW = np.sqrt(W)
    L = cholesky(np.eye(n) + sW[:, None] * Kxx * sW[None, :], lower=True)
    return f, (t - pi), sW, L, converged and np.all(np.isfinite(f)), it


def gpc_window(observed: np.ndarray, grid: RegionGrid, params: GpcParams, exclude=None) -> np.ndarray:
    mask = np.zeros(grid.n_zones, bool)
    for z in observed:
        mask[grid.neighbors_within(int(z), params.active_radius_m)] = True
    mask[observed] = False
    if exclude is not None:
        mask &= ~exclude
    return np.flatnonzero(mask)


def gpc_update(prior_fK: np.ndarray, observed: np.ndarray, labels: np.ndarray,
               params: GpcParams, grid: RegionGrid, exclude=None) -> GpcResult:
    """Posterior ignition probabilities given classified observations.

    Observed zones take their label; unobserved zones near an observation get the
    Laplace-GPC prediction sigma(kappa * g_bar); everything else keeps the prior.
    """
    observed = np.asarray(observed, dtype=np.int64)
    labels = np.asarray(labels, dtype=bool)
    pK = np.asarray(prior_fK, float).copy()
    if observed.size == 0:
        return GpcResult(pK)
    pK[observed] = labels.astype(float)
    window = gpc_window(observed, grid, params, exclude)
    centers = grid.centers()
    X = centers[observed]
    m_obs = logit(prior_fK[observed])
    Kxx = rbf(X, X, params) + params.theta_cov2 * np.eye(len(observed))
    y = np.where(labels, 1.0, -1.0)
    try:
        f, grad, sW, L, ok, it = laplace_mode(Kxx, m_obs, y, params)
    except np.linalg.LinAlgError:
        ok, it = False, params.newton_max_iter
    if not ok:
        return GpcResult(pK, converged=False, iterations=it, window=window)
    if window.size:
        Ks = rbf(centers[window], X, params)
        m_star = logit(prior_fK[window])
        g_bar = m_star + Ks @ grad
        v = solve_triangular(L, sW[:, None] * Ks.T, lower=True)
        var = params.theta_cov0 + params.theta_cov2 - np.sum(v * v, axis=0)
        var = np.maximum(var, 0.0)
        kappa = 1.0 / np.sqrt(1.0 + math.pi * var / 8.0)
        pK[window] = expit(kappa * g_bar)
    return GpcResult(pK, True, it, window, f, sW**2)


def start_burn_split(pK_next, pKx, fK):
    pK_next = np.asarray(pK_next, float)
    pKx = np.asarray(pKx, float)
    fK = np.asarray(fK, float)
    ratio = np.divide(pKx, fK, out=np.zeros_like(fK), where=fK > 0)
    p_burn = np.clip(pK_next * np.minimum(ratio, 1.0), 0.0, 1.0)
    p_start = pK_next - p_burn
    return p_start, p_burn


def drift_fuel(pQ, pH, pD, p_start, p_burn, grid: RegionGrid, burn_factor=None):
    """Unobserved-branch expectation of the fuel transition.

    ``burn_factor`` replaces ``p_burn`` in the dead-fuel equation when given.
    """
    eta = grid.eta.astype(float)
    lam = np.asarray(grid.fuel.lambda_z, float)
    xi = np.asarray(grid.fuel.xi_z, float)
    q0 = np.asarray(grid.fuel.Q_init_z, float) / eta
    pb_d = p_burn if burn_factor is None else burn_factor
    nQ = (1.0 - xi + lam * (eta - 1.0) * pH) * pQ * p_burn + q0 * p_start
    nH = pH - lam * (eta - 1.0) * pQ * pH * p_burn - q0 * p_start
    nD = pD + pQ * (1.0 - pb_d) + xi * pQ * pb_d
    return _to_simplex(nQ, nH, nD)


def _to_simplex(q, h, d):
    q, h, d = np.clip(q, 0.0, 1.0), np.clip(h, 0.0, 1.0), np.clip(d, 0.0, 1.0)
    s = q + h + d
    s = np.where(s > 0, s, 1.0)
    q, h = q / s, h / s
    # put the rounding residue on the dead share
    d = np.clip(1.0 - q - h, 0.0, 1.0)
    return q, h, d


def update_fuel_belief(B: BeliefState, p_start, p_burn, obs: Observation, grid: RegionGrid,
                       burn_source: str = "split", pKx=None):
    """New (pQ, pH, pD). ``burn_source='prior'`` uses pK^x in the dead-fuel factor."""
    burn_factor = None
    if burn_source == "prior":
        burn_factor = B.pK if pKx is None else pKx
    elif burn_source != "split":
        raise ValueError(f"unknown burn_source {burn_source!r}")
    q, h, d = drift_fuel(B.pQ, B.pH, B.pD, p_start, p_burn, grid, burn_factor)
    if obs.zones.size:
        c = np.asarray(grid.fuel.c_z, float)[obs.zones]
        eta = grid.eta[obs.zones].astype(float)
        qo = np.clip(obs.y / c / eta, 0.0, 1.0)
        q[obs.zones] = qo
        h[obs.zones] = 1.0 - qo
        d[obs.zones] = 0.0
    return q, h, d


@dataclass
class BeliefStep:
    """Intermediate quantities of one belief update, kept for traces."""

    post: BeliefState
    fK: np.ndarray
    labels: np.ndarray
    gpc: GpcResult
    p_start: np.ndarray
    p_burn: np.ndarray
    result: BeliefState


def advance_belief(B: BeliefState, footprint, obs: Observation, phi: float,
                   kernel: SpreadKernelParams, gpc: GpcParams, clf: ClassifierParams,
                   grid: RegionGrid, burn_source: str = "split") -> BeliefStep:
    Bx = post_decision_belief(B, footprint)
    fK = forecast_ignition(Bx, phi, kernel, grid)
    labels = classify_observations(obs.y, clf)
    g = gpc_update(fK, obs.zones, labels, gpc, grid, exclude=Bx.extinguished)
    pK = g.pK
    p_start, p_burn = start_burn_split(pK, Bx.pK, fK)
    q, h, d = update_fuel_belief(Bx, p_start, p_burn, obs, grid, burn_source, Bx.pK)
    ext = Bx.extinguished
    pK = pK.copy()
    pK[ext] = 0.0
    q[ext] = 0.0
    h[ext], d[ext] = _to_simplex(q[ext], h[ext], d[ext])[1:]
    gp_zones = np.union1d(obs.zones, g.window) if obs.zones.size else B.gp_zones
    gp_zones = gp_zones[~ext[gp_zones]]
    nxt = BeliefState(pK, q, h, d, ext.copy(), B.t + 1, gp_zones.astype(np.int64))
    return BeliefStep(Bx, fK, labels, g, p_start, p_burn, nxt)
