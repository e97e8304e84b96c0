"""Episode orchestration, batch statistics, tuning and export."""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .belief import BeliefState, advance_belief, post_decision_belief
from .config import ScenarioConfig
from .drone import DroneContext, DronePolicy, DronePolicyParams, DroneState, home_hops
from .fire_env import (EnvState, apply_extinguish, observe, sample_adjacency, sample_spotting,
                       step_cost, step_env)
from .heli import HeliPolicy, HeliPolicyParams
from .region import WindState, sample_wind

SQM_PER_ACRE = 4046.8564224
STREAMS = ("env", "wind", "sampler", "sensor", "init")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


# --- episode initialisation ------------------------------------------------------

def _fire_disk(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    g = cfg.grid()
    fire = cfg.init_fire
    if fire.max_zones == 0:
        return np.zeros(0, np.int64)
    m = min(fire.margin_zones, (g.height - 1) // 2, (g.width - 1) // 2)
    home_r, home_c = divmod(g.home, g.width)
    for _ in range(1000):
        r = int(rng.integers(m, g.height - m))
        c = int(rng.integers(m, g.width - m))
        z = r * g.width + c
        if (r, c) == (home_r, home_c):
            continue
        target = int(rng.integers(fire.min_zones, fire.max_zones + 1))
        # grow the disk until it holds at least the drawn number of zones
        radius = 0.0
        zones = g.neighbors_within(z, radius)
        while zones.size < target and radius < max(g.width, g.height) * g.zone_size_m:
            radius += g.zone_size_m / 4
            zones = g.neighbors_within(z, radius)
        if zones.size > fire.max_zones:
            continue
        return np.sort(zones)
    raise RuntimeError("could not place an initial fire")


def initial_belief(cfg: ScenarioConfig, centroid: np.ndarray) -> BeliefState:
    g = cfg.grid()
    fire = cfg.init_fire
    d = np.hypot(*(g.centers() - centroid).T)
    pK = fire.prior_peak * np.exp(-0.5 * (d / fire.prior_scale_m) ** 2)
    pK[d > fire.prior_radius_m] = 0.0
    eta = g.eta.astype(float)
    pQ = pK * np.asarray(g.fuel.Q_init_z, float) / eta
    n = g.n_zones
    return BeliefState(pK, pQ, 1.0 - pQ, np.zeros(n), np.zeros(n, bool), 0)


def init_episode(cfg: ScenarioConfig, rng: np.random.Generator):
    """Ground truth with a small random fire, the smoke-report prior, agents at home."""
    g = cfg.grid()
    zones = _fire_disk(cfg, rng)
    env = EnvState.unburnt(g).ignite(g, zones)
    if zones.size:
        belief = initial_belief(cfg, g.centers()[zones].mean(axis=0))
    else:
        belief = BeliefState.healthy(g.n_zones)
    series = cfg.wind_series()
    if series:
        wind = series[0]
    else:
        phi = (math.radians(cfg.wind.phi0_deg) if cfg.wind.phi0_deg is not None
               else float(rng.uniform(0, 2 * math.pi)))
        wind = WindState(float(math.exp(cfg.wind.mu_U)), phi % (2 * math.pi))
    drone = DroneState(g.home, 10.0 * cfg.T, wind, belief)
    return env, drone, {"target": None, "fire_zones": zones.tolist()}


# --- records -----------------------------------------------------------------------

@dataclass
class StepRecord:
    t: int
    heli_target: int  # -1 for the no-op decision
    drone_pos: int
    cost: float
    burning_zones: int
    belief_mass_K: float
    belief_mass_Q: float
    observed: int
    gpc_converged: bool
    wind_speed: float
    wind_phi: float


@dataclass
class EpisodeRecord:
    seed: int
    heli_policy: str
    drone_policy: str
    steps: list[StepRecord] = field(default_factory=list)
    cumulative_cost: float = 0.0
    acres_burned: float = 0.0
    class_c: bool = False
    drone_home: bool = False
    home_feasible: bool = True
    initial_fire_zones: int = 0
    runtime_s: float = 0.0
    error: str | None = None
    trace: list | None = None

    def to_dict(self, with_runtime: bool = True) -> dict:
        d = asdict(self)
        if not with_runtime:
            d.pop("runtime_s")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        d = dict(d)
        d["steps"] = [StepRecord(**s) for s in d.get("steps", [])]
        return cls(**d)

    def cost_trajectory(self) -> np.ndarray:
        return np.cumsum([s.cost for s in self.steps])


def acres_burned(env: EnvState, zone_size_m: float) -> float:
    touched = int(np.count_nonzero(env.D + env.Q > 0))
    return touched * zone_size_m**2 / SQM_PER_ACRE


def _policies(cfg: ScenarioConfig):
    g = cfg.grid()
    heli = HeliPolicy(cfg.heli, cfg.kernel, g)
    ctx = DroneContext(g, cfg.kernel, cfg.gpc, cfg.wind_model(), heli, cfg.c_fail)
    return heli, DronePolicy(cfg.drone, ctx)


def run_episode(cfg: ScenarioConfig, seed: int, trace: bool = False, check: bool = False) -> EpisodeRecord:
    """One seeded episode. ``check`` asserts every state invariant after each step."""
    t0 = time.perf_counter()
    g = cfg.grid()
    rngs = rng_streams(seed)
    heli, drone_policy = _policies(cfg)
    env, S, _ = init_episode(cfg, rngs["init"])
    rec = EpisodeRecord(seed, cfg.heli.variant, cfg.drone.variant,
                        initial_fire_zones=int(env.K.sum()))
    rec.home_feasible = bool(home_hops(g, cfg.d_max_m)[S.position] <= S.steps_left)
    series = cfg.wind_series()
    wind_model = cfg.wind_model()
    belief = S.belief
    wind = S.wind
    if trace:
        rec.trace = []
    for t in range(cfg.T):
        # 1-2: helicopter acts on the communicated belief, then the environment applies it
        target = heli(belief, wind.direction_phi)
        footprint = heli.footprint(target)
        env_post = apply_extinguish(env, target, cfg.rho_heli_m, g)
        belief_x = post_decision_belief(belief, footprint)
        # 3: drone decides on the post-decision belief
        S = DroneState(S.position, S.battery_min, wind, belief_x)
        move = drone_policy(S, rngs["sampler"])
        # 4: exogenous information
        if series:
            wind_next = series[min(t + 1, len(series) - 1)]
        else:
            wind_next = sample_wind(wind_model, wind, rngs["wind"])
        adj = sample_adjacency(env_post, wind_next, g, cfg.spread, rngs["env"])
        spots = sample_spotting(env_post, wind_next, g, cfg.spread, rngs["env"])
        env = step_env(env_post, adj, spots, g)
        # 5: drone arrives, observes, updates its belief with the wind it held while deciding
        battery = max(S.battery_min - 10.0, 0.0)
        obs = observe(env, move, cfg.rho_obs_m, cfg.sensor.sigma_noise, g, rngs["sensor"])
        step = advance_belief(belief, footprint, obs, wind.direction_phi, cfg.kernel, cfg.gpc,
                              cfg.sensor, g, cfg.burn_source)
        belief = step.result
        if check:
            env.check(g)
            belief.check()
            assert env_post.extinguished.sum() <= env.extinguished.sum()
        failed = battery <= 0 and move != g.home
        cost = step_cost(env, failed, cfg.c_fail, g)
        rec.steps.append(StepRecord(
            t, -1 if target is None else int(target), int(move), cost, int(env.K.sum()),
            float(belief.pK.sum()), float((belief.pQ * g.eta).sum()), int(obs.zones.size),
            bool(step.gpc.converged), float(wind.speed_U), float(wind.direction_phi)))
        if trace:
            rec.trace.append({
                "t": t,
                "post_decision": belief_x.to_json(),
                "forecast_fK": step.fK.tolist(),
                "belief": belief.to_json(),
                "env": {"H": env.H.tolist(), "Q": env.Q.tolist(), "D": env.D.tolist(),
                        "extinguished": np.flatnonzero(env.extinguished).tolist()},
            })
        S = DroneState(move, battery, wind_next, belief)
        wind = wind_next
    rec.cumulative_cost = float(sum(s.cost for s in rec.steps))
    rec.acres_burned = acres_burned(env, g.zone_size_m)
    rec.class_c = rec.acres_burned >= cfg.class_c_acres
    rec.drone_home = S.position == g.home
    rec.runtime_s = time.perf_counter() - t0
    return rec


def _safe_episode(args) -> EpisodeRecord:
    cfg, seed = args
    try:
        return run_episode(cfg, seed)
    except Exception as exc:  # recorded, counted in the failure rate
        return EpisodeRecord(seed, cfg.heli.variant, cfg.drone.variant, error=repr(exc))


# --- batches -------------------------------------------------------------------------

@dataclass
class BatchMetrics:
    heli_policy: str
    drone_policy: str
    n: int
    mean_cost: list[float]  # cumulative cost by step
    ci_low: list[float]
    ci_high: list[float]
    mean_total: float
    ci_total: tuple[float, float]
    class_c_prob: float
    drone_home_rate: float
    failure_rate: float  # episodes aborted by an error
    runtime_mean_s: float
    runtime_total_s: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci_total"] = list(self.ci_total)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BatchMetrics":
        d = dict(d)
        d["ci_total"] = tuple(d["ci_total"])
        return cls(**d)


def summarize(records: list[EpisodeRecord], T: int) -> BatchMetrics:
    ok = [r for r in records if r.error is None]
    n = len(records)
    if ok:
        traj = np.array([np.pad(r.cost_trajectory(), (0, T - len(r.steps)), mode="edge") for r in ok])
        mean = traj.mean(axis=0)
        half = 1.96 * traj.std(axis=0, ddof=1) / math.sqrt(len(ok)) if len(ok) > 1 else np.zeros(T)
        totals = traj[:, -1]
        tot_half = half[-1]
    else:
        mean = half = np.full(T, np.nan)
        totals = np.array([np.nan])
        tot_half = np.nan
    first = records[0] if records else None
    rt = [r.runtime_s for r in ok]
    return BatchMetrics(
        heli_policy=first.heli_policy if first else "",
        drone_policy=first.drone_policy if first else "",
        n=n,
        mean_cost=mean.tolist(),
        ci_low=(mean - half).tolist(),
        ci_high=(mean + half).tolist(),
        mean_total=float(totals.mean()),
        ci_total=(float(totals.mean() - tot_half), float(totals.mean() + tot_half)),
        class_c_prob=float(np.mean([r.class_c for r in ok])) if ok else float("nan"),
        drone_home_rate=float(np.mean([r.drone_home for r in ok])) if ok else float("nan"),
        failure_rate=(n - len(ok)) / n if n else 0.0,
        runtime_mean_s=float(np.mean(rt)) if rt else 0.0,
        runtime_total_s=float(np.sum(rt)),
    )


def run_records(cfg: ScenarioConfig, n_episodes: int, parallelism: int = 1,
                base_seed: int | None = None) -> list[EpisodeRecord]:
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    base = cfg.base_seed if base_seed is None else base_seed
    jobs = [(cfg, base + i) for i in range(n_episodes)]
    if parallelism <= 1:
        return [_safe_episode(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_safe_episode, jobs, chunksize=max(1, n_episodes // (4 * parallelism))))


def run_batch(cfg: ScenarioConfig, n_episodes: int, parallelism: int = 1,
              base_seed: int | None = None) -> tuple[BatchMetrics, list[EpisodeRecord]]:
    records = run_records(cfg, n_episodes, parallelism, base_seed)
    return summarize(records, cfg.T), records


# --- tuning ------------------------------------------------------------------------------

TUNABLE = {
    "theta_heli": ("heli", "theta_heli"),
    "H": ("drone", "H"),
    "m_scenarios": ("drone", "m_scenarios"),
}


def apply_params(cfg: ScenarioConfig, point: dict) -> ScenarioConfig:
    """Set tunable values; ``theta_IE_k`` sets the k-th lookahead weight."""
    heli = asdict(cfg.heli)
    drone = asdict(cfg.drone)
    theta_ie = list(drone["theta_IE"])
    for k, v in point.items():
        if k.startswith("theta_IE_"):
            i = int(k.rsplit("_", 1)[1])
            theta_ie += [theta_ie[-1] if theta_ie else 0.0] * (i + 1 - len(theta_ie))
            theta_ie[i] = float(v)
        elif k in TUNABLE:
            sec, name = TUNABLE[k]
            (heli if sec == "heli" else drone)[name] = v
        else:
            raise ValueError(f"unknown tunable parameter {k!r}")
    drone["theta_IE"] = tuple(theta_ie)
    return cfg.with_policies(HeliPolicyParams(**heli), DronePolicyParams(**drone))


@dataclass
class TuneResult:
    names: list[str]
    rows: list[dict]  # one per grid point, ranked best first

    @property
    def best(self) -> dict:
        return self.rows[0]

    def level_sets(self) -> dict[tuple[str, str], list[dict]]:
        """For each parameter pair, the grid slice with the others held at the optimum."""
        out = {}
        best = self.best
        for a, b in itertools.combinations(self.names, 2):
            others = [n for n in self.names if n not in (a, b)]
            out[(a, b)] = [
                {a: r[a], b: r[b], "mean_cost": r["mean_cost"]}
                for r in self.rows
                if all(r[o] == best[o] for o in others)
            ]
        return out


def tune(cfg: ScenarioConfig, grid: dict[str, list], n_episodes: int, parallelism: int = 1) -> TuneResult:
    """Exhaustive grid search with common random numbers; ranked by mean cumulative cost."""
    names = list(grid)
    rows = []
    for values in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, values))
        m, _ = run_batch(apply_params(cfg, point), n_episodes, parallelism, cfg.base_seed)
        rows.append({**point, "mean_cost": m.mean_total, "ci_low": m.ci_total[0],
                     "ci_high": m.ci_total[1], "class_c_prob": m.class_c_prob})
    order = sorted(range(len(rows)), key=lambda i: (rows[i]["mean_cost"], i))
    return TuneResult(names, [rows[i] for i in order])


# --- export ---------------------------------------------------------------------------------

TRAJECTORY_COLUMNS = ["heli_policy", "drone_policy", "t", "mean_cost", "ci_low", "ci_high"]
EPISODE_COLUMNS = ["seed", "heli_policy", "drone_policy", "t", "heli_target", "drone_pos", "cost",
                   "cumulative_cost", "burning_zones"]


def export_results(obj, path, fmt: str = "json") -> list[Path]:
    """Write metrics, records or tuning results. Returns the files written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt not in ("json", "csv"):
        raise ValueError("format must be json or csv")
    if isinstance(obj, TuneResult):
        return _export_tune(obj, path, fmt)
    if fmt == "json":
        if isinstance(obj, BatchMetrics):
            payload = obj.to_dict()
        elif isinstance(obj, EpisodeRecord):
            payload = obj.to_dict()
        else:
            payload = [x.to_dict() for x in obj]
        path.write_text(json.dumps(payload, indent=1))
        return [path]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(obj, BatchMetrics) or (isinstance(obj, list) and obj and isinstance(obj[0], BatchMetrics)):
            w.writerow(TRAJECTORY_COLUMNS)
            for m in [obj] if isinstance(obj, BatchMetrics) else obj:
                for t, (mu, lo, hi) in enumerate(zip(m.mean_cost, m.ci_low, m.ci_high)):
                    w.writerow([m.heli_policy, m.drone_policy, t, mu, lo, hi])
        else:
            w.writerow(EPISODE_COLUMNS)
            for r in [obj] if isinstance(obj, EpisodeRecord) else obj:
                cum = 0.0
                for s in r.steps:
                    cum += s.cost
                    w.writerow([r.seed, r.heli_policy, r.drone_policy, s.t, s.heli_target,
                                s.drone_pos, s.cost, cum, s.burning_zones])
    return [path]


def _export_tune(res: TuneResult, path: Path, fmt: str) -> list[Path]:
    written = []
    if fmt == "json":
        path.write_text(json.dumps({"names": res.names, "rows": res.rows}, indent=1))
        written.append(path)
    else:
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=res.names + ["mean_cost", "ci_low", "ci_high", "class_c_prob"])
            w.writeheader()
            w.writerows(res.rows)
        written.append(path)
    for (a, b), rows in res.level_sets().items():
        p = path.with_name(f"{path.stem}_levelset_{a}__{b}.csv")
        with p.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=[a, b, "mean_cost"])
            w.writeheader()
            w.writerows(rows)
        written.append(p)
    return written
