"""Scenario configuration: a YAML document mapped onto frozen dataclasses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .belief import ClassifierParams, GpcParams, SpreadKernelParams
from .drone import DronePolicyParams
from .fire_env import SpreadParams
from .heli import HeliPolicyParams
from .region import (RegionGrid, WindModelParams, load_region, load_wind_series, synthetic_region,
                     uniform_region)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RegionSpec:
    kind: str = "synthetic"  # synthetic | uniform | file
    path: str | None = None
    width: int = 20
    height: int = 20
    seed: int = 0
    zone_size_m: float = 30.0
    home: int | None = None  # default: centre of the southern edge


@dataclass(frozen=True)
class WindSpec:
    path: str | None = None
    mu_U: float = 1.4
    sigma_U: float = 0.3
    sigma_phi: float = 0.15
    phi0_deg: float | None = None  # None: drawn uniformly per episode


@dataclass(frozen=True)
class InitFireSpec:
    min_zones: int = 9
    max_zones: int = 44  # class B: under 10 acres at 30 m zones
    margin_zones: int = 4
    prior_radius_m: float = 180.0  # about 25 acres
    prior_scale_m: float = 90.0
    prior_peak: float = 0.9

    def __post_init__(self):
        if not 0 <= self.min_zones <= self.max_zones:
            raise ConfigError("need 0 <= min_zones <= max_zones")
        if self.margin_zones < 0 or not 0 <= self.prior_peak <= 1:
            raise ConfigError("invalid initial-fire settings")


@dataclass(frozen=True)
class ScenarioConfig:
    region: RegionSpec = RegionSpec()
    wind: WindSpec = WindSpec()
    T: int = 12
    rho_obs_m: float = 180.0
    rho_heli_m: float = 120.0
    d_max_m: float = 360.0
    c_fail: float = 1000.0
    class_c_acres: float = 10.0
    spread: SpreadParams = SpreadParams()
    kernel: SpreadKernelParams = SpreadKernelParams()
    gpc: GpcParams = GpcParams()
    sensor: ClassifierParams = ClassifierParams()
    init_fire: InitFireSpec = InitFireSpec()
    heli: HeliPolicyParams = HeliPolicyParams()
    drone: DronePolicyParams = DronePolicyParams()
    burn_source: str = "split"
    base_seed: int = 0
    episodes: int = 200
    base_dir: str = "."
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if min(self.rho_obs_m, self.rho_heli_m, self.d_max_m) <= 0:
            raise ConfigError("radii must be positive")
        if self.c_fail < 0 or self.class_c_acres <= 0:
            raise ConfigError("c_fail must be nonnegative and class_c_acres positive")
        if self.burn_source not in ("split", "prior"):
            raise ConfigError("burn_source must be 'split' or 'prior'")

    def _resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def grid(self) -> RegionGrid:
        if "grid" not in self._cache:
            r = self.region
            if r.kind == "file":
                if not r.path:
                    raise ConfigError("region.path required for kind 'file'")
                try:
                    g = load_region(self._resolve(r.path), r.zone_size_m, 0)
                except (OSError, ValueError) as exc:
                    raise ConfigError(f"cannot load region: {exc}") from None
            elif r.kind == "uniform":
                g = uniform_region(r.width, r.height, r.zone_size_m)
            elif r.kind == "synthetic":
                g = synthetic_region(r.width, r.height, r.seed, r.zone_size_m)
            else:
                raise ConfigError(f"unknown region kind {r.kind!r}")
            home = r.home if r.home is not None else (g.height - 1) * g.width + g.width // 2
            if not 0 <= home < g.n_zones:
                raise ConfigError(f"home zone {home} outside grid")
            g = dataclasses.replace(g, home=int(home))
            self._cache["grid"] = g
        return self._cache["grid"]

    def wind_series(self):
        if self.wind.path is None:
            return None
        if "wind" not in self._cache:
            try:
                self._cache["wind"] = load_wind_series(self._resolve(self.wind.path))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot load wind series: {exc}") from None
        return self._cache["wind"]

    def wind_model(self) -> WindModelParams:
        return WindModelParams(self.wind.mu_U, self.wind.sigma_U, self.wind.sigma_phi)

    def with_policies(self, heli: HeliPolicyParams | None = None,
                      drone: DronePolicyParams | None = None) -> "ScenarioConfig":
        return dataclasses.replace(self, heli=heli or self.heli, drone=drone or self.drone, _cache=self._cache)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            out[f.name] = dataclasses.asdict(v) if dataclasses.is_dataclass(v) else v
        return out


_SECTIONS = {
    "region": RegionSpec,
    "wind": WindSpec,
    "spread": SpreadParams,
    "kernel": SpreadKernelParams,
    "gpc": GpcParams,
    "sensor": ClassifierParams,
    "init_fire": InitFireSpec,
    "heli": HeliPolicyParams,
    "drone": DronePolicyParams,
}


def _build(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {sorted(unknown)}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where!r}: {exc}") from None


def config_from_dict(d: dict, base_dir: str = ".") -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    kwargs: dict = {"base_dir": base_dir}
    names = {f.name for f in dataclasses.fields(ScenarioConfig) if not f.name.startswith("_")}
    for k, v in d.items():
        if k not in names:
            raise ConfigError(f"unknown config key {k!r}")
        kwargs[k] = _build(_SECTIONS[k], v, k) if k in _SECTIONS else v
    kwargs["base_dir"] = base_dir
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(data or {}, base_dir=str(path.parent))


def dump_config(cfg: ScenarioConfig, path) -> None:
    d = cfg.to_dict()
    d.pop("base_dir", None)
    Path(path).write_text(yaml.safe_dump(_plain(d), sort_keys=False))


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v
