"""Synthetic traffic-demand grids and their per-beam aggregation.

A grid holds the traffic demand of each geographic cell in bps. Beam demand is
obtained by summing the cells whose nearest beam center (great-circle angle)
lies within the beam's coverage radius; cells outside every beam are dropped.

The generator is a stand-in for a real traffic emulator: a uniform background
plus Gaussian hotspots. Each sample of a dataset draws from its own random
stream seeded with ``seed ^ sample_index``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

# Beam centers of the shipped 10-beam layout, degrees.
DEFAULT_BEAM_LAT = (39.3, 42.0, 44.7, 47.4, 51.0, 53.7, 56.4, 39.5, 42.2, 49.0)
DEFAULT_BEAM_LONG = (-5.3, 0.0, 5.3, 10.6, -0.5, 6.0, 12.3, 11.4, 16.7, 17.4)


@dataclass(frozen=True)
class GridSpec:
    rows: int = 64
    cols: int = 64
    lat_bounds: tuple[float, float] = (37.0, 59.0)
    long_bounds: tuple[float, float] = (-8.0, 20.0)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Latitude and longitude of every cell center, each shaped (rows, cols)."""
        (lat0, lat1), (lon0, lon1) = self.lat_bounds, self.long_bounds
        lat = lat0 + (np.arange(self.rows) + 0.5) * (lat1 - lat0) / self.rows
        lon = lon0 + (np.arange(self.cols) + 0.5) * (lon1 - lon0) / self.cols
        return np.meshgrid(lat, lon, indexing="ij")

    def contains(self, lat: float, lon: float) -> bool:
        return (
            self.lat_bounds[0] <= lat <= self.lat_bounds[1]
            and self.long_bounds[0] <= lon <= self.long_bounds[1]
        )


@dataclass(frozen=True)
class DemandGrid:
    values: np.ndarray  # (rows, cols) bps
    spec: GridSpec = GridSpec()

    def __post_init__(self):
        if self.values.shape != (self.spec.rows, self.spec.cols):
            raise ValueError(
                f"grid shape {self.values.shape} does not match {self.spec.rows}x{self.spec.cols}"
            )
        if np.any(self.values < 0):
            raise ValueError("traffic demand must be non-negative")

    @property
    def lat_bounds(self):
        return self.spec.lat_bounds

    @property
    def long_bounds(self):
        return self.spec.long_bounds


@dataclass(frozen=True)
class BeamGeometry:
    centers: tuple[tuple[float, float], ...]  # (lat, long) degrees
    coverage_radius: float = 2.2  # degrees of great-circle arc

    def __post_init__(self):
        if len(self.centers) < 1:
            raise ValueError("need at least one beam")
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be positive")

    @property
    def n_beams(self) -> int:
        return len(self.centers)

    @classmethod
    def default(cls) -> "BeamGeometry":
        return cls(tuple(zip(DEFAULT_BEAM_LAT, DEFAULT_BEAM_LONG)))


@dataclass(frozen=True)
class BeamDemand:
    requested: np.ndarray  # R_b in bps
    sample_id: int = 0

    def __post_init__(self):
        if np.any(self.requested < 0):
            raise ValueError("requested capacity must be non-negative")


@dataclass(frozen=True)
class DemandModelParams:
    """Knobs of the synthetic traffic generator.

    ``background_level`` is per cell. Hotspot amplitudes are total traffic in
    bps, spread over the grid by a normalized Gaussian kernel of width
    ``hotspot_sigma`` degrees. Hotspot centers are drawn per sample unless
    ``hotspot_centers`` fixes them, or ``layout_seed`` draws them once for
    the whole dataset. Every sample also draws one activity multiplier from
    ``activity_range`` that scales all of its hotspots together.
    """

    hotspot_count: int = 0
    hotspot_sigma: float = 1.0
    background_level: float = 0.0
    amplitude_range: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    hotspot_centers: tuple[tuple[float, float], ...] | None = None
    layout_seed: int | None = None
    activity_range: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.hotspot_count < 0:
            raise ValueError("hotspot_count must be >= 0")
        lo, hi = self.amplitude_range
        if lo < 0 or hi < lo:
            raise ValueError("amplitude_range must be a non-negative interval")
        lo, hi = self.activity_range
        if lo < 0 or hi < lo:
            raise ValueError("activity_range must be a non-negative interval")
        if self.hotspot_sigma <= 0:
            raise ValueError("hotspot_sigma must be positive")
        if self.background_level < 0:
            raise ValueError("background_level must be non-negative")
        if self.hotspot_centers is not None and len(self.hotspot_centers) != self.hotspot_count:
            raise ValueError("hotspot_centers length must equal hotspot_count")


def default_demand_params(seed: int = 0) -> DemandModelParams:
    """Shipped generator settings for the 10-beam scenario.

    Five fixed traffic centers, each with its own uniform intensity per
    sample, calibrated so per-beam demand spans roughly 250-1100 Mbps.
    """
    return DemandModelParams(
        hotspot_count=5,
        hotspot_sigma=0.8,
        background_level=1.6835e6,
        amplitude_range=(0.0, 1.4155e9),
        seed=seed,
        layout_seed=11,
    )


def angular_distance(lat1, lon1, lat2, lon2):
    """Great-circle angle in degrees (haversine form), broadcasting."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.subtract(lon2, lon1))
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return np.degrees(2 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


@lru_cache(maxsize=32)
def cell_beam_map(spec: GridSpec, geometry: BeamGeometry) -> np.ndarray:
    """Beam index (0-based) serving each cell, or -1 when out of coverage."""
    lat, lon = spec.cell_centers()
    centers = np.asarray(geometry.centers, dtype=float)
    d = angular_distance(lat[..., None], lon[..., None], centers[:, 0], centers[:, 1])
    nearest = np.argmin(d, axis=-1)
    inside = np.take_along_axis(d, nearest[..., None], axis=-1)[..., 0] <= geometry.coverage_radius
    out = np.where(inside, nearest, -1)
    out.setflags(write=False)
    return out


def aggregate(grid: DemandGrid, geometry: BeamGeometry, sample_id: int = 0) -> BeamDemand:
    """Sum cell demand into per-beam requested capacity."""
    labels = cell_beam_map(grid.spec, geometry)
    mask = labels >= 0
    requested = np.bincount(
        labels[mask], weights=grid.values[mask], minlength=geometry.n_beams
    ).astype(float)
    return BeamDemand(requested=requested, sample_id=sample_id)


def out_of_coverage_mass(grid: DemandGrid, geometry: BeamGeometry) -> float:
    labels = cell_beam_map(grid.spec, geometry)
    return float(grid.values[labels < 0].sum())


def _check_bounds(spec: GridSpec, geometry: BeamGeometry):
    for lat, lon in geometry.centers:
        if not spec.contains(lat, lon):
            raise ValueError(f"beam center ({lat}, {lon}) lies outside the grid bounds")


def _layout(params: DemandModelParams, spec: GridSpec, rng: np.random.Generator) -> np.ndarray:
    if params.hotspot_centers is not None:
        return np.asarray(params.hotspot_centers, dtype=float).reshape(-1, 2)
    if params.layout_seed is not None:
        rng = np.random.default_rng(params.layout_seed)
    lat = rng.uniform(*spec.lat_bounds, size=params.hotspot_count)
    lon = rng.uniform(*spec.long_bounds, size=params.hotspot_count)
    return np.column_stack([lat, lon])


def _kernel_stack(centers: np.ndarray, sigma: float, spec: GridSpec) -> np.ndarray:
    lat, lon = spec.cell_centers()
    d = angular_distance(lat[None], lon[None], centers[:, :1, None], centers[:, 1:, None])
    k = np.exp(-0.5 * (d / sigma) ** 2)
    return k / k.sum(axis=(1, 2), keepdims=True)


@lru_cache(maxsize=8)
def _cached_kernels(centers: tuple, sigma: float, spec: GridSpec) -> np.ndarray:
    return _kernel_stack(np.asarray(centers, dtype=float).reshape(-1, 2), sigma, spec)


def _grid_from_stream(
    params: DemandModelParams, spec: GridSpec, rng: np.random.Generator
) -> np.ndarray:
    values = np.full((spec.rows, spec.cols), float(params.background_level))
    if params.hotspot_count == 0:
        return values
    centers = _layout(params, spec, rng)
    activity = rng.uniform(*params.activity_range)
    amplitudes = activity * rng.uniform(*params.amplitude_range, size=params.hotspot_count)
    if params.hotspot_centers is not None or params.layout_seed is not None:
        kernels = _cached_kernels(tuple(map(tuple, centers)), params.hotspot_sigma, spec)
    else:
        kernels = _kernel_stack(centers, params.hotspot_sigma, spec)
    return values + np.tensordot(amplitudes, kernels, axes=1)


def generate_grid(
    params: DemandModelParams, geometry: BeamGeometry, spec: GridSpec = GridSpec()
) -> DemandGrid:
    """One demand grid drawn from the stream seeded by ``params.seed``."""
    _check_bounds(spec, geometry)
    rng = np.random.default_rng(params.seed)
    return DemandGrid(_grid_from_stream(params, spec, rng), spec)


def sample_grid(
    params: DemandModelParams, geometry: BeamGeometry, sample_id: int, spec: GridSpec = GridSpec()
) -> DemandGrid:
    """Grid of sample ``sample_id`` in a dataset seeded with ``params.seed``."""
    return generate_grid(replace(params, seed=params.seed ^ sample_id), geometry, spec)


def generate_demands(
    params: DemandModelParams,
    geometry: BeamGeometry,
    n_samples: int,
    spec: GridSpec = GridSpec(),
) -> list[BeamDemand]:
    return [
        aggregate(sample_grid(params, geometry, i, spec), geometry, sample_id=i)
        for i in range(n_samples)
    ]


def calibrate(
    params: DemandModelParams,
    geometry: BeamGeometry,
    target: tuple[float, float] = (100e6, 1100e6),
    quantiles: tuple[float, float] = (0.01, 0.99),
    n_pilot: int = 400,
    spec: GridSpec = GridSpec(),
) -> DemandModelParams:
    """Rescale background and hotspot amplitudes to hit a demand range.

    Aggregation is linear in the grid, so per-beam demand splits into a
    background part and a hotspot part. Both are measured on a pilot run and
    scaled so that the chosen lower/upper quantiles of per-beam demand land on
    ``target``.
    """
    bg_only = replace(params, hotspot_count=0, hotspot_centers=None)
    bg = aggregate(generate_grid(bg_only, geometry, spec), geometry).requested
    hot_params = replace(params, background_level=0.0)
    hot = np.array([d.requested for d in generate_demands(hot_params, geometry, n_pilot, spec)])
    lo, hi = target
    if np.ptp(hot) <= 0:
        raise ValueError("hotspot demand has no spread; cannot calibrate")

    def q(a, h, which):
        return np.quantile(a * bg + h * hot, quantiles[which])

    # Demand is a*bg + h*hot per beam; each quantile is monotone in a and in
    # h, so alternate 1-D root finds until both land on target.
    h_top = hi / max(np.quantile(hot, quantiles[1]), 1e-300)
    a_top = hi / bg.max() if bg.max() > 0 else 0.0
    a, h = 0.0, h_top
    for _ in range(100):
        if a_top > 0 and q(0.0, h, 0) < lo < q(a_top, h, 0):
            a = brentq(lambda x: q(x, h, 0) - lo, 0.0, a_top, xtol=1e-15 * a_top)
        else:
            a = 0.0
        if q(a, 0.0, 1) >= hi:
            raise ValueError("background alone exceeds the upper target; cannot calibrate")
        h_new = brentq(lambda x: q(a, x, 1) - hi, 0.0, 4 * h_top)
        if abs(h_new - h) <= 1e-12 * h:
            h = h_new
            break
        h = h_new
    return replace(
        params,
        background_level=params.background_level * a,
        amplitude_range=(params.amplitude_range[0] * h, params.amplitude_range[1] * h),
    )


def write_demands(path: str | Path, demands: Sequence[BeamDemand]):
    path = Path(path)
    n_beams = len(demands[0].requested) if demands else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"R_{b + 1}" for b in range(n_beams)])
        for d in demands:
            w.writerow([d.sample_id] + [repr(float(r)) for r in d.requested])


def read_demands(path: str | Path) -> list[BeamDemand]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if not header or header[0] != "sample_id":
            raise ValueError(f"{path}: expected sample_id,R_1,...,R_B header")
        return [
            BeamDemand(requested=np.array([float(x) for x in row[1:]]), sample_id=int(row[0]))
            for row in r
        ]


def write_grid(path: str | Path, grid: DemandGrid):
    np.savetxt(path, grid.values, delimiter=",", fmt="%.17g")
