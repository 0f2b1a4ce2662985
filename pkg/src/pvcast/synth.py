"""Deterministic synthetic fixtures.

``linear-map``
    Grid, atlas, station, PVGIS and plant tables over a small region. Plant
    capacity factor is a linear map of the cube variables at the plant site
    plus noise; a latent irradiation field is the evaluation reference.
``ar-sin``
    Daily series ``AR(1) + 0.3 * sin(0.3 * t)``.
``outlier-line``
    Points on a line with a fraction of gross outliers.
``variogram-field``
    A Gaussian field with power variogram ``2 * h**1.5`` (planar degrees),
    plus the exact variogram on a set of lags.
"""
from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import geo
from .datacube import (ATLAS_COLUMNS, PVGIS_MONTHLY, PVGIS_STD, STATION_COLUMNS,
                       nearest_indices, write_columns_csv)
from .errors import ValidationError

KINDS = ("linear-map", "ar-sin", "outlier-line", "variogram-field")

REGION = (-16.0, -10.0, -46.0, -40.0)
AR_PHI = 0.6
AR_SIGMA = 0.05
SIN_AMPLITUDE = 0.3
SIN_FREQUENCY = 0.3
VARIOGRAM_SCALE = 2.0
VARIOGRAM_EXPONENT = 1.5

# how each station variable follows the latent irradiation field (sign, noise)
_STATION_LOADINGS = {
    "total_solar_irradiance": (1.0, 0.15),
    "days_with_precipitation": (-0.8, 0.3),
    "atm_pressure": (0.0, 1.0),
    "avg_max_temp": (-0.4, 0.5),
    "avg_rel_humidity": (-0.9, 0.3),
    "avg_wind_speed": (0.2, 0.8),
    "avg_cloudiness": (-0.9, 0.25),
    "total_precipitation": (-0.8, 0.3),
    "avg_comp_temp": (0.3, 0.6),
    "avg_visibility": (0.5, 0.5),
    "avg_min_temp": (0.1, 0.8),
    "evaporation": (0.6, 0.4),
}
_ATLAS_LOADINGS = {
    "global_horizontal": (1.0, 0.25),
    "tilted": (1.0, 0.25),
    "direct_normal": (1.0, 0.35),
    "diffuse": (-0.6, 0.4),
    "par": (0.9, 0.3),
}


def latent_field(lat, lon) -> np.ndarray:
    """Smooth irradiation-like surface in [0, 1] over the fixture region."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    u = (lat - REGION[0]) / (REGION[1] - REGION[0])
    v = (lon - REGION[2]) / (REGION[3] - REGION[2])
    z = 0.6 * (1 - u) + 0.25 * np.sin(2.5 * v + 1.0) + 0.15 * np.cos(3.0 * u * v)
    return (z - z.min()) / (z.max() - z.min()) if z.max() > z.min() else np.zeros_like(z)


def _proxy(rng, latent, loading, noise, base, spread):
    z = loading * latent + noise * rng.standard_normal(len(latent))
    return base + spread * z


def linear_map(out_dir, seed: int = 42, step: float = 0.5, n_stations: int = 25,
               n_plants: int = 30) -> Dict[str, Path]:
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    glat, glon = geo.regular_grid(*REGION, step)
    latent = latent_field(glat, glon)
    paths = {}

    paths["grid"] = out / "grid.csv"
    write_columns_csv(paths["grid"], ["lat", "lon"], [glat, glon])

    atlas = {name: _proxy(rng, latent, *_ATLAS_LOADINGS[name], 5.0, 1.0)
             for name in ATLAS_COLUMNS}
    paths["atlas"] = out / "atlas.csv"
    write_columns_csv(paths["atlas"], ["lat", "lon"] + list(atlas),
                      [glat, glon] + list(atlas.values()))

    st_idx = np.sort(rng.choice(len(glat), n_stations, replace=False))
    slat, slon = glat[st_idx], glon[st_idx]
    st_latent = latent[st_idx]
    stations = {name: _proxy(rng, st_latent, *_STATION_LOADINGS[name], 10.0, 2.0)
                for name in STATION_COLUMNS}
    alt = rng.uniform(200.0, 1200.0, n_stations).round(1)
    paths["stations"] = out / "stations.csv"
    write_columns_csv(paths["stations"], ["lat", "lon", "alt"] + list(stations),
                      [slat, slon, alt] + list(stations.values()))

    monthly = [100.0 + 60.0 * latent * (1.0 + 0.2 * np.cos(2 * np.pi * m / 12))
               + 3.0 * rng.standard_normal(len(glat)) for m in range(12)]
    stds = [np.abs(5.0 + rng.standard_normal(len(glat))) for _ in range(12)]
    paths["pvgis"] = out / "pvgis.csv"
    write_columns_csv(paths["pvgis"], ["lat", "lon"] + list(PVGIS_MONTHLY + PVGIS_STD),
                      [glat, glon] + monthly + stds)

    # capacity factor: linear in the values a nearest-neighbour cube holds at each site
    nn = nearest_indices(glat, glon, slat, slon, 1)[:, 0]
    joined = [atlas[n] for n in ATLAS_COLUMNS] + [stations[n][nn] for n in STATION_COLUMNS]
    J = np.column_stack(joined)
    span = np.ptp(J, axis=0)
    Jn = (J - J.min(axis=0)) / np.where(span > 0, span, 1.0)
    coef = rng.normal(0.0, 1.0, J.shape[1]) / J.shape[1]
    cf = Jn @ coef + 0.01 * rng.standard_normal(len(glat))
    cf = 0.12 + 0.1 * (cf - cf.min()) / (cf.max() - cf.min())
    sites = np.sort(rng.choice(len(glat), n_plants, replace=False))
    paths["plants"] = out / "plants.csv"
    write_columns_csv(paths["plants"], ["lat", "lon", "capacity_factor"],
                      [glat[sites], glon[sites], cf[sites]])

    paths["reference"] = out / "reference.csv"
    write_columns_csv(paths["reference"], ["lat", "lon", "value"], [glat, glon, latent])
    return paths


def ar_sin_values(n: int, seed: int = 7, phi: float = AR_PHI,
                  sigma: float = AR_SIGMA) -> np.ndarray:
    rng = np.random.default_rng(seed)
    eps = sigma * rng.standard_normal(n)
    x = np.zeros(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    t = np.arange(n)
    return 1.0 + x + SIN_AMPLITUDE * np.sin(SIN_FREQUENCY * t)


def dates(n: int, start: str = "2020-01-01") -> List[str]:
    d0 = dt.date.fromisoformat(start)
    return [(d0 + dt.timedelta(days=i)).isoformat() for i in range(n)]


def write_series_csv(path, date_col: List[str], columns: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + list(columns))
        for i, d in enumerate(date_col):
            w.writerow([d] + [repr(float(v[i])) for v in columns.values()])


def ar_sin(out_dir, n: int = 200, seed: int = 7) -> Dict[str, Path]:
    path = Path(out_dir) / "series.csv"
    write_series_csv(path, dates(n), {"generation": ar_sin_values(n, seed)})
    return {"series": path}


def outlier_line(out_dir, n: int = 100, seed: int = 42, fraction: float = 0.1,
                 slope: float = 2.0, intercept: float = 1.0) -> Dict[str, Path]:
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 10.0, n))
    y = slope * x + intercept + 0.05 * rng.standard_normal(n)
    bad = rng.choice(n, int(round(fraction * n)), replace=False)
    y[bad] += rng.uniform(20.0, 40.0, len(bad))
    path = Path(out_dir) / "line.csv"
    write_columns_csv(path, ["x", "y"], [x, y])
    return {"line": path}


def power_variogram_field(n: int = 20, seed: int = 42):
    """Field samples whose covariance follows ``C0 - 2 h**1.5`` in planar degrees."""
    rng = np.random.default_rng(seed)
    lat = rng.uniform(-15.0, -14.0, n)
    lon = rng.uniform(-45.0, -44.0, n)
    h = geo.planar(lat, lon, lat, lon)
    gamma = VARIOGRAM_SCALE * h ** VARIOGRAM_EXPONENT
    C = gamma.max() + 1.0 - gamma
    L = np.linalg.cholesky(C + 1e-10 * np.eye(n))
    return lat, lon, L @ rng.standard_normal(n)


def variogram_field(out_dir, n: int = 20, seed: int = 42) -> Dict[str, Path]:
    lat, lon, value = power_variogram_field(n, seed)
    out = Path(out_dir)
    paths = {"samples": out / "field.csv", "variogram": out / "variogram.csv"}
    write_columns_csv(paths["samples"], ["lat", "lon", "value"], [lat, lon, value])
    lags = np.linspace(0.05, 1.0, 20)
    write_columns_csv(paths["variogram"], ["lag", "semivariance"],
                      [lags, VARIOGRAM_SCALE * lags ** VARIOGRAM_EXPONENT])
    return paths


def generate(kind: str, out_dir, n=None, seed: int = 42) -> Dict[str, Path]:
    if kind == "linear-map":
        return linear_map(out_dir, seed)
    if kind == "ar-sin":
        return ar_sin(out_dir, n or 200, seed)
    if kind == "outlier-line":
        return outlier_line(out_dir, n or 100, seed)
    if kind == "variogram-field":
        return variogram_field(out_dir, n or 20, seed)
    raise ValidationError(f"unknown synthetic kind {kind!r}; choose from {KINDS}")
