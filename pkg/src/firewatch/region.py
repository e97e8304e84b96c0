"""Static region geometry, fuel tables and wind inputs.

Zones live on a rectangular ``width x height`` grid.  Row 0 is the northern
edge and columns increase eastward, so zone ``index = row * width + col``.
Angles are radians measured clockwise from north.  A wind direction is the
heading the wind blows *toward*.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np


class RegionError(ValueError):
    """Base class for region loading problems."""


class RegionParseError(RegionError):
    pass


class RegionInvariantError(RegionError):
    pass


class RegionDimensionError(RegionError):
    pass


FUEL_COLUMNS = (
    "kappa_load",
    "kappa_SAV",
    "kappa_depth",
    "kappa_moist",
    "kappa_heat",
    "kappa_dens",
    "m_tot",
    "m_eff",
    "lambda_z",
    "xi_z",
    "r_z",
    "c_z",
    "eta_z",
    "Q_init_z",
    "kappa_elev",
)

# Rothermel inputs use the customary US units of the original model:
# load lb/ft^2, SAV 1/ft, depth ft, moisture and mineral contents as fractions,
# heat BTU/lb, particle density lb/ft^3.
_ROTHERMEL_FIELDS = (
    "kappa_load",
    "kappa_SAV",
    "kappa_depth",
    "kappa_moist",
    "kappa_heat",
    "kappa_dens",
    "m_tot",
    "m_eff",
)


@dataclass(frozen=True)
class FuelParams:
    """Fuel characteristics of one zone, or of many zones when fields are arrays."""

    kappa_load: float
    kappa_SAV: float
    kappa_depth: float
    kappa_moist: float
    kappa_heat: float
    kappa_dens: float
    m_tot: float
    m_eff: float
    lambda_z: float = 0.0
    xi_z: float = 0.0
    r_z: float = 1.0
    c_z: float = 1.0
    eta_z: int = 100
    Q_init_z: int = 10
    kappa_elev: float = 0.0

    def averaged(self, other: "FuelParams") -> "FuelParams":
        """Componentwise mean of the Rothermel inputs, used between two zones."""
        return replace(
            self,
            **{
                name: 0.5 * (np.asarray(getattr(self, name)) + np.asarray(getattr(other, name)))
                for name in _ROTHERMEL_FIELDS
            },
        )

    def take(self, idx) -> "FuelParams":
        return FuelParams(**{f.name: np.asarray(getattr(self, f.name))[idx] for f in fields(self)})

    def validate(self) -> None:
        eta = np.asarray(self.eta_z)
        qinit = np.asarray(self.Q_init_z)
        for name in _ROTHERMEL_FIELDS:
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise RegionInvariantError(f"{name} must be positive")
        for name in ("lambda_z", "xi_z", "r_z", "c_z"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise RegionInvariantError(f"{name} must be nonnegative")
        if np.any(np.asarray(self.xi_z) > 1):
            raise RegionInvariantError("xi_z must lie in [0, 1]")
        if np.any(eta < 1) or np.any(eta != np.round(eta)):
            raise RegionInvariantError("eta_z must be a positive integer")
        if np.any(qinit < 1) or np.any(qinit > eta) or np.any(qinit != np.round(qinit)):
            raise RegionInvariantError("Q_init_z must be an integer in (0, eta_z]")
        lam = np.asarray(self.lambda_z, dtype=float)
        if np.any(lam * (eta - 1) > 1 + np.asarray(self.xi_z) + 1e-12):
            raise RegionInvariantError("lambda_z * (eta_z - 1) must not exceed 1 + xi_z")


@dataclass(frozen=True)
class WindState:
    speed_U: float
    direction_phi: float

    def __post_init__(self):
        if self.speed_U < 0:
            raise ValueError("wind speed must be nonnegative")


@dataclass(frozen=True)
class WindModelParams:
    mu_U: float = 1.4
    sigma_U: float = 0.3
    sigma_phi: float = 0.15

    def __post_init__(self):
        if self.sigma_U <= 0 or self.sigma_phi < 0:
            raise ValueError("need sigma_U > 0 and sigma_phi >= 0")


@dataclass(frozen=True, eq=False)
class RegionGrid:
    width: int
    height: int
    zone_size_m: float
    fuel: FuelParams
    home: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise RegionDimensionError("grid must have at least one zone")
        if self.zone_size_m <= 0:
            raise RegionInvariantError("zone_size_m must be positive")
        if not 0 <= self.home < self.n_zones:
            raise RegionInvariantError(f"home zone {self.home} outside grid")
        for f in fields(self.fuel):
            v = np.asarray(getattr(self.fuel, f.name))
            if v.shape != (self.n_zones,):
                raise RegionDimensionError(
                    f"fuel column {f.name} has shape {v.shape}, expected ({self.n_zones},)"
                )
        self.fuel.validate()

    @property
    def n_zones(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def rc(self, z) -> tuple:
        return divmod(z, self.width)

    def index(self, row, col):
        return row * self.width + col

    def zone_fuel(self, z: int) -> FuelParams:
        return self.fuel.take(z)

    @property
    def eta(self) -> np.ndarray:
        return np.asarray(self.fuel.eta_z, dtype=np.int64)

    def centers(self) -> np.ndarray:
        """(n, 2) array of zone centers as (east, north) meters from the NW corner."""
        rows, cols = np.divmod(np.arange(self.n_zones), self.width)
        return np.column_stack(
            [(cols + 0.5) * self.zone_size_m, -(rows + 0.5) * self.zone_size_m]
        )

    def distance(self, a, b):
        ra, ca = np.divmod(a, self.width)
        rb, cb = np.divmod(b, self.width)
        return self.zone_size_m * np.hypot(ra - rb, ca - cb)

    def contains_point(self, east: float, north: float) -> int | None:
        col = math.floor(east / self.zone_size_m)
        row = math.floor(-north / self.zone_size_m)
        if 0 <= row < self.height and 0 <= col < self.width:
            return row * self.width + col
        return None

    def disk_offsets(self, radius_m: float) -> np.ndarray:
        return disk_offsets(radius_m, self.zone_size_m)

    def neighbors_within(self, z: int, radius_m: float) -> np.ndarray:
        if radius_m < 0:
            raise ValueError("radius must be nonnegative")
        r, c = divmod(int(z), self.width)
        off = self.disk_offsets(radius_m)
        rr, cc = r + off[:, 0], c + off[:, 1]
        ok = (rr >= 0) & (rr < self.height) & (cc >= 0) & (cc < self.width)
        return rr[ok] * self.width + cc[ok]

    def footprint_mask(self, z: int, radius_m: float) -> np.ndarray:
        mask = np.zeros(self.n_zones, dtype=bool)
        mask[self.neighbors_within(z, radius_m)] = True
        return mask

    def slope_between(self, src, dst):
        """Rise over run from ``src`` toward ``dst`` (0 for coincident zones)."""
        elev = np.asarray(self.fuel.kappa_elev, dtype=float)
        d = np.asarray(self.distance(src, dst), dtype=float)
        rise = elev[dst] - elev[src]
        return np.divide(rise, d, out=np.zeros_like(d), where=d > 0)


@lru_cache(maxsize=64)
def disk_offsets(radius_m: float, zone_size_m: float) -> np.ndarray:
    """Integer (drow, dcol) offsets within ``radius_m``, sorted row-major (read-only)."""
    k = int(math.floor(radius_m / zone_size_m + 1e-9))
    dr, dc = np.mgrid[-k : k + 1, -k : k + 1]
    dr, dc = dr.ravel(), dc.ravel()
    keep = zone_size_m * np.hypot(dr, dc) <= radius_m + 1e-9
    out = np.column_stack([dr[keep], dc[keep]]).astype(np.int64)
    out.setflags(write=False)
    return out


def bearing(a: int, b: int, width: int) -> float:
    """Direction of zone ``b`` seen from zone ``a``, clockwise from north in [0, 2pi)."""
    if a == b:
        raise ValueError("bearing undefined for identical zones")
    ra, ca = divmod(a, width)
    rb, cb = divmod(b, width)
    return offset_bearing(rb - ra, cb - ca)


def offset_bearing(drow, dcol):
    """Vectorised bearing of a grid offset; rows grow southward."""
    ang = np.arctan2(np.asarray(dcol, dtype=float), -np.asarray(drow, dtype=float))
    ang = np.mod(ang, 2 * np.pi)
    return float(ang) if np.ndim(ang) == 0 else ang


def distance(a: int, b: int, grid: RegionGrid) -> float:
    return float(grid.distance(a, b))


def neighbors_within(z: int, radius: float, grid: RegionGrid) -> set[int]:
    return set(int(i) for i in grid.neighbors_within(z, radius))


# --- CSV ingestion ----------------------------------------------------------

def load_region(path, zone_size_m: float = 30.0, home: int = 0, format: str = "csv-grid") -> RegionGrid:
    """Read a CSV grid: header ``row,col,<fuel columns>``, one row per zone in row-major order."""
    if format != "csv-grid":
        raise RegionError(f"unsupported region format {format!r}")
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        header = reader.fieldnames or []
        missing = [c for c in ("row", "col", *FUEL_COLUMNS) if c not in header]
        if missing:
            raise RegionParseError(f"missing columns: {', '.join(missing)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    (int(rec["row"]), int(rec["col"]), [float(rec[c]) for c in FUEL_COLUMNS])
                )
            except (TypeError, ValueError) as exc:
                raise RegionParseError(f"{path}:{lineno}: malformed row ({exc})") from None
    if not rows:
        raise RegionDimensionError("region file has no zones")
    height = max(r for r, _, _ in rows) + 1
    width = max(c for _, c, _ in rows) + 1
    if len(rows) != width * height:
        raise RegionDimensionError(
            f"{len(rows)} rows for a {height}x{width} grid ({width * height} zones expected)"
        )
    for i, (r, c, _) in enumerate(rows):
        if (r, c) != divmod(i, width):
            raise RegionDimensionError(f"zone ({r},{c}) out of row-major order at data row {i}")
    table = np.array([vals for _, _, vals in rows], dtype=float)
    cols = {name: table[:, j] for j, name in enumerate(FUEL_COLUMNS)}
    for name in ("eta_z", "Q_init_z"):
        if np.any(cols[name] != np.round(cols[name])):
            raise RegionInvariantError(f"{name} must be integral")
        cols[name] = cols[name].astype(np.int64)
    return RegionGrid(width, height, zone_size_m, FuelParams(**cols), home)


def write_region(grid: RegionGrid, path, comment: str | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["row", "col", *FUEL_COLUMNS])
        arrays = [np.asarray(getattr(grid.fuel, c)) for c in FUEL_COLUMNS]
        for z in range(grid.n_zones):
            r, c = divmod(z, grid.width)
            w.writerow([r, c, *(_fmt(a[z]) for a in arrays)])


def _fmt(v) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def uniform_region(width: int, height: int, zone_size_m: float = 30.0, home: int = 0, **overrides) -> RegionGrid:
    base = dict(DEFAULT_FUEL)
    base.update(overrides)
    n = width * height
    cols = {k: np.full(n, v, dtype=np.int64 if k in ("eta_z", "Q_init_z") else float) for k, v in base.items()}
    return RegionGrid(width, height, zone_size_m, FuelParams(**cols), home)


# Hardwood-litter-like surface fuel (Anderson model 9 magnitudes).
DEFAULT_FUEL = dict(
    kappa_load=0.134,
    kappa_SAV=2500.0,
    kappa_depth=0.2,
    kappa_moist=0.06,
    kappa_heat=8000.0,
    kappa_dens=32.0,
    m_tot=0.0555,
    m_eff=0.010,
    lambda_z=0.004,
    xi_z=0.12,
    r_z=1.0,
    c_z=1.0,
    eta_z=100,
    Q_init_z=10,
    kappa_elev=0.0,
)


def synthetic_region(width: int, height: int, seed: int = 0, zone_size_m: float = 30.0, home: int = 0) -> RegionGrid:
    """Heterogeneous synthetic terrain: smooth elevation, fuel patches, a few high-value sites."""
    rng = np.random.default_rng(seed)
    n = width * height
    rows, cols = np.divmod(np.arange(n), width)

    def smooth_field(n_bumps, scale):
        f = np.zeros(n)
        for _ in range(n_bumps):
            r0, c0 = rng.uniform(0, height), rng.uniform(0, width)
            s = rng.uniform(0.15, 0.4) * max(width, height)
            f += rng.normal() * np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2 * s * s))
        return scale * f

    elev = 800.0 + smooth_field(6, 25.0)
    wet = smooth_field(5, 1.0)
    moist = np.clip(0.06 + 0.015 * wet, 0.03, 0.12)
    load = np.clip(0.134 * (1 + 0.2 * smooth_field(4, 1.0)), 0.06, 0.25)
    sav = np.clip(2500 * (1 + 0.1 * smooth_field(4, 1.0)), 1500, 3500)
    depth = np.clip(0.2 * (1 + 0.2 * smooth_field(3, 1.0)), 0.1, 0.4)
    eta = rng.integers(80, 121, size=n)
    cost = np.ones(n)
    for _ in range(max(1, n // 150)):
        r0, c0 = rng.integers(0, height), rng.integers(0, width)
        cost[(np.abs(rows - r0) <= 1) & (np.abs(cols - c0) <= 1)] = 4.0
    fuel = FuelParams(
        kappa_load=load,
        kappa_SAV=sav,
        kappa_depth=depth,
        kappa_moist=moist,
        kappa_heat=np.full(n, 8000.0),
        kappa_dens=np.full(n, 32.0),
        m_tot=np.full(n, 0.0555),
        m_eff=np.full(n, 0.010),
        lambda_z=np.full(n, 0.004),
        xi_z=np.full(n, 0.12),
        r_z=cost,
        c_z=np.ones(n),
        eta_z=eta.astype(np.int64),
        Q_init_z=np.full(n, 10, dtype=np.int64),
        kappa_elev=elev,
    )
    return RegionGrid(width, height, zone_size_m, fuel, home)


# --- wind -------------------------------------------------------------------

def load_wind_series(path) -> list[WindState]:
    """CSV with ``timestamp,speed_mps,direction_deg``; direction is the heading the wind blows toward."""
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        need = {"timestamp", "speed_mps", "direction_deg"}
        if not need.issubset(reader.fieldnames or []):
            raise RegionParseError(f"wind file needs columns {sorted(need)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                u = float(rec["speed_mps"])
                deg = float(rec["direction_deg"])
            except (TypeError, ValueError):
                raise RegionParseError(f"{path}:{lineno}: malformed wind row") from None
            if u < 0 or not math.isfinite(u) or not math.isfinite(deg):
                raise RegionParseError(f"{path}:{lineno}: invalid wind values")
            out.append(WindState(u, math.radians(deg) % (2 * math.pi)))
    return out


def write_wind_series(series: Sequence[WindState], path, start: str = "2020-08-01T12:00") -> None:
    import datetime as dt

    t0 = dt.datetime.fromisoformat(start)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "speed_mps", "direction_deg"])
        for i, ws in enumerate(series):
            w.writerow([(t0 + dt.timedelta(minutes=10 * i)).isoformat(), f"{ws.speed_U:.3f}",
                        f"{math.degrees(ws.direction_phi):.2f}"])


def sample_wind(params: WindModelParams, prev: WindState, rng: np.random.Generator) -> WindState:
    speed = float(np.exp(params.mu_U + params.sigma_U * rng.standard_normal()))
    phi = prev.direction_phi
    if params.sigma_phi > 0:
        phi = phi + params.sigma_phi * rng.standard_normal()
    return WindState(speed, float(phi % (2 * math.pi)))

