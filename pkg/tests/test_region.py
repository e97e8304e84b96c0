import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SCENARIOS
from firewatch.region import (FUEL_COLUMNS, RegionDimensionError, RegionInvariantError,
                              RegionParseError, WindModelParams, WindState, bearing, distance,
                              load_region, load_wind_series, neighbors_within, sample_wind,
                              synthetic_region, uniform_region, write_region, write_wind_series)


def _write_uniform_csv(path, width, height, **override):
    g = uniform_region(width, height)
    write_region(g, path)
    if override:
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        row = lines[1].split(",")
        for k, v in override.items():
            row[header.index(k)] = str(v)
        lines[1] = ",".join(row)
        path.write_text("\n".join(lines) + "\n")
    return path


def test_load_uniform_4x4(tmp_path):
    g = load_region(_write_uniform_csv(tmp_path / "r.csv", 4, 4))
    assert g.n_zones == 16 and g.home == 0 and g.shape == (4, 4)


def test_zero_fuel_rejected(tmp_path):
    with pytest.raises(RegionInvariantError):
        load_region(_write_uniform_csv(tmp_path / "r.csv", 4, 4, eta_z=0))


def test_negative_rate_rejected(tmp_path):
    with pytest.raises(RegionInvariantError):
        load_region(_write_uniform_csv(tmp_path / "r.csv", 4, 4, xi_z=-0.1))


def test_malformed_row(tmp_path):
    with pytest.raises(RegionParseError):
        load_region(_write_uniform_csv(tmp_path / "r.csv", 4, 4, kappa_SAV="abc"))


def test_missing_zone_is_dimension_error(tmp_path):
    p = _write_uniform_csv(tmp_path / "r.csv", 4, 4)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(RegionDimensionError):
        load_region(p)


def test_missing_column(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("row,col,kappa_load\n0,0,1\n")
    with pytest.raises(RegionParseError):
        load_region(p)


def test_square_mile_region():
    g = load_region(SCENARIOS / "regions" / "mile_53x53.csv")
    assert g.n_zones == 2809


def test_roundtrip_synthetic(tmp_path):
    g = synthetic_region(6, 5, seed=1)
    write_region(g, tmp_path / "s.csv", "synthetic")
    h = load_region(tmp_path / "s.csv")
    for c in FUEL_COLUMNS:
        np.testing.assert_allclose(getattr(h.fuel, c), getattr(g.fuel, c), rtol=0, atol=0)


def test_distance_examples():
    g = uniform_region(5, 5)
    assert distance(0, 1, g) == 30.0
    assert distance(0, 6, g) == pytest.approx(42.42640687, abs=1e-6)
    assert distance(7, 7, g) == 0.0


def test_bearing_examples():
    w = 5
    a = 12  # (2, 2)
    assert bearing(a, 7, w) == 0.0  # north
    assert bearing(a, 13, w) == pytest.approx(math.pi / 2)
    assert bearing(a, 18, w) == pytest.approx(3 * math.pi / 4)
    with pytest.raises(ValueError):
        bearing(a, a, w)


def test_neighbor_counts():
    g = uniform_region(31, 31)
    z = 15 * 31 + 15
    assert neighbors_within(z, 0, g) == {z}
    assert len(neighbors_within(z, 180, g)) == 113
    assert len(neighbors_within(z, 120, g)) == 49
    with pytest.raises(ValueError):
        g.neighbors_within(z, -1)


zone = st.integers(0, 9 * 7 - 1)


@settings(max_examples=200, deadline=None)
@given(zone, zone, zone)
def test_metric_properties(a, b, c):
    g = uniform_region(9, 7)
    assert distance(a, b, g) == distance(b, a, g)
    assert distance(a, c, g) <= distance(a, b, g) + distance(b, c, g) + 1e-9


@settings(max_examples=200, deadline=None)
@given(zone, zone)
def test_bearing_antisymmetry(a, b):
    if a == b:
        return
    d = (bearing(a, b, 9) - bearing(b, a, 9)) % (2 * math.pi)
    assert d == pytest.approx(math.pi)


@settings(max_examples=100, deadline=None)
@given(zone, st.floats(0, 400))
def test_neighbors_full_scan(z, radius):
    g = uniform_region(9, 7)
    expect = {u for u in range(g.n_zones) if distance(z, u, g) <= radius + 1e-9}
    assert neighbors_within(z, radius, g) == expect


def test_wind_constant_direction(rng):
    p = WindModelParams(sigma_phi=0.0)
    w = WindState(3.0, 1.0)
    for _ in range(50):
        w = sample_wind(p, w, rng)
        assert w.direction_phi == 1.0


def test_wind_speed_lognormal():
    # fixed seed: a 3 SE band has a 0.27% false-fail rate per draw
    rng = np.random.default_rng(0)
    p = WindModelParams(mu_U=1.4, sigma_U=0.3)
    w = WindState(1.0, 0.0)
    logs = np.empty(100_000)
    for i in range(logs.size):
        w = sample_wind(p, w, rng)
        logs[i] = math.log(w.speed_U)
    se = 0.3 / math.sqrt(logs.size)
    assert abs(logs.mean() - 1.4) < 3 * se
    assert 0 <= w.direction_phi < 2 * math.pi


def test_wind_series_roundtrip(tmp_path):
    series = [WindState(1.0 + i, (0.3 * i) % (2 * math.pi)) for i in range(12)]
    write_wind_series(series, tmp_path / "w.csv")
    back = load_wind_series(tmp_path / "w.csv")
    assert len(back) == 12
    assert back[3].speed_U == pytest.approx(4.0)
    assert back[3].direction_phi == pytest.approx(0.9, abs=1e-3)


def test_wind_series_parse_error(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("timestamp,speed_mps,direction_deg\nx,fast,10\n")
    with pytest.raises(RegionParseError):
        load_wind_series(p)
    with pytest.raises(ValueError):
        WindState(-1.0, 0.0)
