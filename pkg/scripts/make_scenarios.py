"""Regenerate the bundled synthetic region and wind files."""

import math
from pathlib import Path

import numpy as np

from firewatch.region import WindModelParams, WindState, sample_wind, synthetic_region, write_region, write_wind_series

ROOT = Path(__file__).resolve().parents[1] / "scenarios"

NOTE = "SYNTHETIC fuel table generated by scripts/make_scenarios.py; not measured data"


def main():
    write_region(synthetic_region(20, 20, seed=7), ROOT / "regions" / "desk_20x20.csv", NOTE)
    write_region(synthetic_region(53, 53, seed=11), ROOT / "regions" / "mile_53x53.csv", NOTE)
    rng = np.random.default_rng(3)
    w = WindState(math.exp(1.4), math.radians(60.0))
    series = [w]
    for _ in range(47):
        w = sample_wind(WindModelParams(), w, rng)
        series.append(w)
    write_wind_series(series, ROOT / "wind" / "synthetic_wind.csv")


if __name__ == "__main__":
    main()
