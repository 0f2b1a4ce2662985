"""Locations, great-circle distances and regular grids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ValidationError

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class Location:
    lat: float
    lon: float
    alt: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValidationError("location coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"longitude {self.lon} outside [-180, 180]")
        if self.alt is not None and not math.isfinite(self.alt):
            raise ValidationError("altitude must be finite")


def as_coords(locations) -> tuple[np.ndarray, np.ndarray]:
    """Return (lat, lon) float arrays from Locations, (n, 2) arrays or an (lat, lon) pair."""
    if isinstance(locations, tuple) and len(locations) == 2 and np.ndim(locations[0]) == 1:
        lat, lon = (np.asarray(v, dtype=float) for v in locations)
    elif isinstance(locations, np.ndarray):
        arr = np.atleast_2d(np.asarray(locations, dtype=float))
        lat, lon = arr[:, 0], arr[:, 1]
    else:
        locs = list(locations)
        lat = np.array([p.lat for p in locs], dtype=float)
        lon = np.array([p.lon for p in locs], dtype=float)
    if lat.shape != lon.shape:
        raise ValidationError("lat/lon length mismatch")
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise ValidationError("coordinates must be finite")
    if np.any(np.abs(lat) > 90.0) or np.any(np.abs(lon) > 180.0):
        raise ValidationError("coordinates out of bounds")
    return lat, lon


def haversine(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Pairwise great-circle distance in km, shape (len(lat1), len(lat2))."""
    p1 = np.radians(np.asarray(lat1, dtype=float))[:, None]
    p2 = np.radians(np.asarray(lat2, dtype=float))[None, :]
    dlat = p2 - p1
    dlon = np.radians(np.asarray(lon2, dtype=float))[None, :] - np.radians(
        np.asarray(lon1, dtype=float)
    )[:, None]
    a = np.sin(dlat / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def planar(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Pairwise Euclidean distance in coordinate units (small test regions)."""
    dlat = np.asarray(lat2, dtype=float)[None, :] - np.asarray(lat1, dtype=float)[:, None]
    dlon = np.asarray(lon2, dtype=float)[None, :] - np.asarray(lon1, dtype=float)[:, None]
    return np.hypot(dlat, dlon)


METRICS = {"haversine": haversine, "planar": planar}


def distance_fn(metric: str):
    try:
        return METRICS[metric]
    except KeyError:
        raise ValidationError(f"unknown distance metric {metric!r}") from None


def regular_grid(lat_min, lat_max, lon_min, lon_max, step) -> tuple[np.ndarray, np.ndarray]:
    """Row-major grid, north to south then west to east (top-left origin)."""
    if step <= 0:
        raise ValidationError("grid step must be positive")
    if lat_max < lat_min or lon_max < lon_min:
        raise ValidationError("grid bounds are inverted")
    n_lat = int(math.floor((lat_max - lat_min) / step + 1e-9)) + 1
    n_lon = int(math.floor((lon_max - lon_min) / step + 1e-9)) + 1
    lats = lat_max - step * np.arange(n_lat)
    lons = lon_min + step * np.arange(n_lon)
    glat, glon = np.meshgrid(lats, lons, indexing="ij")
    return np.round(glat.ravel(), 10), np.round(glon.ravel(), 10)


def grid_shape(lat: Iterable[float], lon: Iterable[float]) -> tuple[int, int]:
    """(rows, cols) of a row-major regular grid, or raise if the points are not one."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    n_rows = len(np.unique(lat))
    n_cols = len(np.unique(lon))
    if n_rows * n_cols != len(lat):
        raise ValidationError("points do not form a regular grid")
    return n_rows, n_cols
