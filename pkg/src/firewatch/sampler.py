"""Joint samples of the hidden fire state drawn from a belief."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .belief import BeliefState, GpcParams, logit, rbf
from .fire_env import EnvState
from .region import RegionGrid


class FactorizationError(LinAlgError):
    pass


@dataclass
class SampledWorld:
    k: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    D: np.ndarray

    def to_env_state(self, extinguished: np.ndarray, t: int = 0) -> EnvState:
        return EnvState(self.H.copy(), self.Q.copy(), self.D.copy(), self.Q > 0,
                        extinguished.copy(), t)


def laplace_field_cov(zones, params: GpcParams, W, grid: RegionGrid) -> np.ndarray:
    """Lower Cholesky factor L with L L^T = (K^-1 + W)^-1 over ``zones``.

    Uses K - K S B^-1 S K with S = W^1/2 and B = I + S K S, which avoids inverting K.
    """
    zones = np.asarray(zones, dtype=np.int64)
    if zones.size == 0:
        raise ValueError("active set must be nonempty")
    X = grid.centers()[zones]
    K = rbf(X, X, params) + params.theta_cov2 * np.eye(zones.size)
    sW = np.sqrt(np.clip(np.asarray(W, float), 0.0, None))
    B = np.eye(zones.size) + sW[:, None] * K * sW[None, :]
    Lb = cholesky(B, lower=True)
    V = np.linalg.solve(Lb, sW[:, None] * K)
    cov = K - V.T @ V
    cov = 0.5 * (cov + cov.T)
    try:
        return cholesky(cov, lower=True)
    except LinAlgError:
        pass
    try:
        return cholesky(cov + 10 * params.theta_cov2 * np.eye(zones.size), lower=True)
    except LinAlgError as exc:
        raise FactorizationError("posterior covariance not positive definite") from exc


def sample_ignition_field(B: BeliefState, params: GpcParams, grid: RegionGrid,
                          rng: np.random.Generator, factor=None, zones=None, size=None) -> np.ndarray:
    """Boolean ignition field(s): thresholded correlated latent on the GP zones, Bernoulli elsewhere.

    ``factor`` lets callers reuse one factorisation for many draws. With ``size`` the result
    has shape (size, n).
    """
    n = grid.n_zones
    zones = B.gp_zones if zones is None else np.asarray(zones, dtype=np.int64)
    m = 1 if size is None else int(size)
    out = rng.random((m, n)) < B.pK[None, :]
    if zones.size:
        mean = logit(B.pK[zones])
        if factor is None:
            p = np.clip(B.pK[zones], 1e-6, 1 - 1e-6)
            factor = laplace_field_cov(zones, params, p * (1 - p), grid)
        latent = mean[None, :] + rng.standard_normal((m, zones.size)) @ factor.T
        out[:, zones] = latent > 0
    out[:, B.extinguished] = False
    return out[0] if size is None else out


def sample_fuel_state(B: BeliefState, k_field: np.ndarray, grid: RegionGrid,
                      rng: np.random.Generator) -> SampledWorld:
    eta = grid.eta
    k = np.asarray(k_field, bool)
    H, Q, D = eta.copy(), np.zeros_like(eta), np.zeros_like(eta)
    idx = np.flatnonzero(k)
    if idx.size:
        p = np.column_stack([B.pQ[idx], B.pH[idx], B.pD[idx]])
        p = np.clip(p, 0.0, None)
        p /= p.sum(axis=1, keepdims=True)
        draw = rng.multinomial(eta[idx], p)
        Q[idx], H[idx], D[idx] = draw[:, 0], draw[:, 1], draw[:, 2]
    return SampledWorld(k, H, Q, D)
