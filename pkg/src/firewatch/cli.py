"""Command line entry point: simulate, tune, replay, validate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .harness import export_results, run_batch, run_episode, tune

log = logging.getLogger("firewatch")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: from config)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="firewatch", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a batch of episodes")
    _common(s)
    s.add_argument("--episodes", type=int, default=None)
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--policies", default=None,
                   help="comma-separated HELI:DRONE pairs, e.g. CFA-DLA:IE-DLA,NULL:STAY")

    t = sub.add_parser("tune", help="grid search over policy parameters")
    _common(t)
    t.add_argument("--episodes", type=int, default=None)
    t.add_argument("--parallel", type=int, default=1)
    t.add_argument("--param", action="append", default=[], metavar="NAME=V1,V2,...",
                   help="grid axis; names: theta_heli, H, m_scenarios, theta_IE_<k>")

    r = sub.add_parser("replay", help="re-run one seed with a full trace")
    _common(r)

    v = sub.add_parser("validate", help="run the invariant checks on a config")
    _common(v)
    v.add_argument("--episodes", type=int, default=3)
    return ap


def _parse_grid(items: list[str]) -> dict:
    grid = {}
    for item in items:
        name, _, vals = item.partition("=")
        if not vals:
            raise ConfigError(f"bad --param {item!r}; expected NAME=V1,V2")
        parsed = []
        for v in vals.split(","):
            try:
                parsed.append(int(v) if name in ("H", "m_scenarios") else float(v))
            except ValueError:
                raise ConfigError(f"bad value {v!r} for {name}") from None
        grid[name.strip()] = parsed
    if not grid:
        raise ConfigError("tune needs at least one --param")
    return grid


def _policy_configs(cfg, pairs: str | None):
    if not pairs:
        return [cfg]
    out = []
    for pair in pairs.split(","):
        heli, _, drone = pair.partition(":")
        try:
            out.append(cfg.with_policies(dataclasses.replace(cfg.heli, variant=heli.strip()),
                                         dataclasses.replace(cfg.drone, variant=drone.strip())))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, base_seed=args.seed)
        cfg.grid()
        cfg.wind_series()
        if args.command == "tune":
            grid = _parse_grid(args.param)
        elif args.command == "simulate":
            configs = _policy_configs(cfg, args.policies)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    ext = args.format
    try:
        if args.command == "simulate":
            n = args.episodes or cfg.episodes
            metrics = []
            for c in configs:
                m, recs = run_batch(c, n, args.parallel)
                tag = f"{c.heli.variant}_{c.drone.variant}"
                export_results(recs, out / f"episodes_{tag}.{ext}", ext)
                export_results(m, out / f"metrics_{tag}.{ext}", ext)
                metrics.append(m)
                print(f"{tag}: mean cost {m.mean_total:.1f} "
                      f"[{m.ci_total[0]:.1f}, {m.ci_total[1]:.1f}] "
                      f"class C {m.class_c_prob:.3f} home {m.drone_home_rate:.3f} "
                      f"errors {m.failure_rate:.3f}")
            if ext == "csv":
                export_results(metrics, out / "trajectories.csv", "csv")
            if any(m.failure_rate > 0 for m in metrics):
                return EXIT_RUNTIME
        elif args.command == "tune":
            res = tune(cfg, grid, args.episodes or cfg.episodes, args.parallel)
            files = export_results(res, out / f"tune.{ext}", ext)
            print("best:", json.dumps(res.best))
            print("wrote", ", ".join(str(f) for f in files))
        elif args.command == "replay":
            rec = run_episode(cfg, cfg.base_seed, trace=True)
            path = out / f"replay_seed{cfg.base_seed}.json"
            export_results(rec, path, "json")
            print(f"seed {cfg.base_seed}: cost {rec.cumulative_cost:.1f}, "
                  f"{rec.acres_burned:.2f} acres, drone home {rec.drone_home}; wrote {path}")
        elif args.command == "validate":
            for i in range(args.episodes):
                rec = run_episode(cfg, cfg.base_seed + i, check=True)
                again = run_episode(cfg, cfg.base_seed + i)
                if rec.to_dict(False) != again.to_dict(False):
                    raise AssertionError(f"seed {cfg.base_seed + i} is not reproducible")
                total = sum(s.cost for s in rec.steps)
                if abs(total - rec.cumulative_cost) > 1e-9 * max(1.0, total):
                    raise AssertionError("cumulative cost does not match step costs")
            print(f"validate: {args.episodes} episode(s) passed all invariant checks")
    except (AssertionError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
