"""Helicopter targeting policies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .belief import BeliefState, SpreadKernelParams, drift_fuel, forecast_ignition
from .region import RegionGrid

VARIANTS = ("DLA1", "CFA-DLA", "NULL")


@dataclass(frozen=True)
class HeliPolicyParams:
    variant: str = "CFA-DLA"
    theta_heli: float = 5.0
    radius_m: float = 120.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown helicopter policy {self.variant!r}")
        if self.theta_heli < 0 or self.radius_m < 0:
            raise ValueError("theta_heli and radius_m must be nonnegative")


def footprint_scores(values, radius_m: float, grid: RegionGrid) -> np.ndarray:
    """Score of each target: sum of ``values`` over its footprint, in ascending zone order."""
    off = grid.disk_offsets(radius_m)
    return kernels.footprint_sum_flat(values, off, grid.shape)


def _argmax(scores: np.ndarray) -> int:
    return int(np.argmax(scores))  # first maximum, i.e. the lowest zone index


def dla1_scores(B: BeliefState, phi: float, kernel: SpreadKernelParams, radius_m: float,
                grid: RegionGrid, fK=None) -> np.ndarray:
    if fK is None:
        fK = forecast_ignition(B, phi, kernel, grid)
    r = np.asarray(grid.fuel.r_z, float)
    return footprint_scores(r * (fK - B.pK), radius_m, grid)


def dla1_decide(B: BeliefState, phi: float, kernel: SpreadKernelParams, radius_m: float,
                grid: RegionGrid) -> int:
    return _argmax(dla1_scores(B, phi, kernel, radius_m, grid))


def cfa_inputs(B: BeliefState, phi: float, kernel: SpreadKernelParams, grid: RegionGrid):
    """Drift-only one-step burning-fuel forecast and start probability."""
    fK = forecast_ignition(B, phi, kernel, grid)
    p_start = np.clip(fK - B.pK, 0.0, 1.0)
    pq_next, _, _ = drift_fuel(B.pQ, B.pH, B.pD, p_start, B.pK, grid)
    return pq_next, p_start


def cfa_scores(B: BeliefState, pq_forecast, f_start, theta_heli: float, radius_m: float,
               grid: RegionGrid) -> np.ndarray:
    r = np.asarray(grid.fuel.r_z, float)
    eta = grid.eta.astype(float)
    return footprint_scores(r * eta * pq_forecast + theta_heli * f_start, radius_m, grid)


def cfa_dla_decide(B: BeliefState, pq_forecast, f_start, params: HeliPolicyParams, grid: RegionGrid) -> int:
    return _argmax(cfa_scores(B, pq_forecast, f_start, params.theta_heli, params.radius_m, grid))


class HeliPolicy:
    """Callable wrapper: ``policy(B, phi) -> target zone or None``."""

    def __init__(self, params: HeliPolicyParams, kernel: SpreadKernelParams, grid: RegionGrid):
        self.params = params
        self.kernel = kernel
        self.grid = grid

    def __call__(self, B: BeliefState, phi: float) -> int | None:
        p = self.params
        if p.variant == "NULL":
            return None
        if p.variant == "DLA1":
            return dla1_decide(B, phi, self.kernel, p.radius_m, self.grid)
        pq, fs = cfa_inputs(B, phi, self.kernel, self.grid)
        return cfa_dla_decide(B, pq, fs, p, self.grid)

    def footprint(self, target: int | None) -> np.ndarray:
        if target is None:
            return np.zeros(0, np.int64)
        return self.grid.neighbors_within(target, self.params.radius_m)
