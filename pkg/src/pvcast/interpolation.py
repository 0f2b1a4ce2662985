"""Ordinary kriging with a power-law variogram.

The semivariance model is ``gamma(h) = nugget + scale * h**exponent`` for
``h > 0`` and ``gamma(0) = 0``, with ``0 < exponent < 2``.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import least_squares, minimize_scalar, nnls

from . import geo
from .errors import FitDiverged, InsufficientData, SingularSystem, ValidationError

logger = logging.getLogger(__name__)

EXPONENT_BOUNDS = (1e-6, 2.0 - 1e-6)


@dataclass(frozen=True)
class VariogramModel:
    scale: float
    exponent: float
    nugget: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.scale) and np.isfinite(self.exponent) and np.isfinite(self.nugget)):
            raise ValidationError("variogram parameters must be finite")
        if self.scale < 0 or self.nugget < 0:
            raise ValidationError("variogram scale and nugget must be non-negative")
        if not 0.0 < self.exponent < 2.0:
            raise ValidationError("variogram exponent must lie in (0, 2)")

    def __call__(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        gamma = self.nugget + self.scale * np.power(np.abs(h), self.exponent)
        return np.where(h > 0, gamma, 0.0)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "exponent": self.exponent,
                "nugget": self.nugget, "residual": self.residual}


def empirical_semivariogram(lat, lon, values, n_bins: int = 10,
                            metric: str = "haversine",
                            max_lag: Optional[float] = None) -> List[Tuple[float, float]]:
    """Binned semivariance: mean lag and mean ``0.5*(vi - vj)**2`` per distance bin.

    Bins split ``(0, max_lag]`` into ``n_bins`` equal widths; empty bins are
    dropped. Coincident pairs (zero distance) are ignored.
    """
    values = np.asarray(values, dtype=float)
    lat, lon = geo.as_coords((lat, lon))
    if len(values) < 2:
        raise InsufficientData("need at least 2 samples for a semivariogram")
    if len(values) != len(lat):
        raise ValidationError("values and locations differ in length")
    if n_bins < 1:
        raise ValidationError("n_bins must be positive")
    dist = geo.distance_fn(metric)(lat, lon, lat, lon)
    iu = np.triu_indices(len(values), k=1)
    d = dist[iu]
    sv = 0.5 * (values[iu[0]] - values[iu[1]]) ** 2
    keep = d > 0
    d, sv = d[keep], sv[keep]
    if len(d) == 0:
        raise InsufficientData("all samples share one location")
    top = d.max() if max_lag is None else float(max_lag)
    keep = d <= top
    d, sv = d[keep], sv[keep]
    edges = np.linspace(0.0, top, n_bins + 1)
    which = np.clip(np.searchsorted(edges, d, side="left") - 1, 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        mask = which == b
        if mask.any():
            out.append((float(d[mask].mean()), float(sv[mask].mean())))
    return out


def _nnls_for_exponent(h, g, exponent):
    A = np.column_stack([np.ones_like(h), h ** exponent])
    coef, rnorm = nnls(A, g)
    return coef, rnorm ** 2


def fit_variogram(empirical) -> VariogramModel:
    """Least-squares fit of (nugget, scale, exponent) to empirical points.

    For a fixed exponent the model is linear in (nugget, scale), which are
    solved by non-negative least squares; the exponent is then found by a
    bounded scalar search on the profiled residual and refined jointly.
    """
    pts = np.asarray(empirical, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise InsufficientData("need at least 3 empirical semivariogram points")
    h, g = pts[:, 0], pts[:, 1]
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise FitDiverged("non-finite empirical semivariogram")
    if np.any(h <= 0):
        raise ValidationError("lag distances must be positive")
    if np.all(g == 0):
        return VariogramModel(scale=0.0, exponent=1.0, nugget=0.0, residual=0.0)

    # rescale lags so the exponent search is well conditioned
    h_ref = float(np.max(h))
    hs = h / h_ref

    def profile(alpha):
        return _nnls_for_exponent(hs, g, alpha)[1]

    grid = np.linspace(EXPONENT_BOUNDS[0], EXPONENT_BOUNDS[1], 41)
    sse = np.array([profile(a) for a in grid])
    i = int(np.argmin(sse))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(profile, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13, "maxiter": 500})
    alpha = float(res.x) if profile(res.x) <= sse[i] else float(grid[i])
    (nugget, scale_s), sse_best = _nnls_for_exponent(hs, g, alpha)
    # the bounded search resolves the exponent only to ~sqrt(eps); a joint
    # least-squares polish from there converges to full precision
    polish = least_squares(lambda p: p[0] + p[1] * hs ** p[2] - g, [nugget, scale_s, alpha],
                           bounds=([0.0, 0.0, EXPONENT_BOUNDS[0]], [np.inf, np.inf, EXPONENT_BOUNDS[1]]),
                           xtol=1e-15, ftol=1e-15, gtol=1e-15)
    sse_polish = float(np.sum(polish.fun ** 2))
    if polish.success and sse_polish < sse_best:
        (nugget, scale_s, alpha), sse_best = polish.x, sse_polish
    scale = scale_s / h_ref ** alpha
    if not (np.isfinite(scale) and np.isfinite(nugget)):
        raise FitDiverged("variogram fit produced non-finite parameters")
    alpha = float(np.clip(alpha, *EXPONENT_BOUNDS))
    return VariogramModel(scale=float(scale), exponent=alpha, nugget=float(nugget),
                          residual=float(sse_best))


@dataclass
class KrigingModel:
    """Ordinary kriging system over distinct sample locations.

    Duplicate locations are merged (mean value) before the system is built.
    """
    lat: np.ndarray
    lon: np.ndarray
    values: np.ndarray
    variogram: VariogramModel
    metric: str = "haversine"
    merged: int = field(default=0, init=False)

    def __post_init__(self):
        lat, lon = geo.as_coords((self.lat, self.lon))
        values = np.asarray(self.values, dtype=float)
        if values.shape != lat.shape:
            raise ValidationError("values and locations differ in length")
        if not np.all(np.isfinite(values)):
            raise ValidationError("sample values must be finite")
        geo.distance_fn(self.metric)
        keys = np.column_stack([lat, lon])
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).ravel()
        if len(uniq) < len(keys):
            self.merged = len(keys) - len(uniq)
            logger.warning("merged %d duplicate sample locations", self.merged)
            sums = np.bincount(inverse, weights=values, minlength=len(uniq))
            counts = np.bincount(inverse, minlength=len(uniq))
            # keep first-appearance order
            first = np.full(len(uniq), len(keys))
            np.minimum.at(first, inverse, np.arange(len(keys)))
            order = np.argsort(first, kind="stable")
            lat, lon = uniq[order, 0], uniq[order, 1]
            values = (sums / counts)[order]
        if len(values) < 3:
            raise InsufficientData("kriging needs at least 3 distinct sample locations")
        self.lat, self.lon, self.values = lat, lon, values
        self._factor = None

    @property
    def n(self) -> int:
        return len(self.values)

    def _lu(self):
        if self._factor is None:
            n = self.n
            dist = geo.distance_fn(self.metric)(self.lat, self.lon, self.lat, self.lon)
            A = np.ones((n + 1, n + 1))
            A[:n, :n] = self.variogram(dist)
            np.fill_diagonal(A[:n, :n], 0.0)
            A[n, n] = 0.0
            with warnings.catch_warnings():
                # exact singularity is reported below as SingularSystem
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
            diag = np.abs(np.diag(lu))
            if diag.min() <= np.finfo(float).eps * max(diag.max(), 1.0) * (n + 1):
                raise SingularSystem("kriging system is singular (degenerate variogram?)")
            self._factor = (lu, piv)
        return self._factor

    def solve(self, lat, lon) -> np.ndarray:
        """Kriging weights and Lagrange multiplier, shape (n + 1, n_points)."""
        glat, glon = geo.as_coords((lat, lon))
        dist = geo.distance_fn(self.metric)(self.lat, self.lon, glat, glon)
        rhs = np.ones((self.n + 1, len(glat)))
        rhs[: self.n] = self.variogram(dist)
        return scipy.linalg.lu_solve(self._lu(), rhs), rhs

    def weights(self, lat, lon) -> np.ndarray:
        sol, _ = self.solve(lat, lon)
        return sol[: self.n].T


@dataclass
class Raster:
    lat: np.ndarray
    lon: np.ndarray
    prediction: np.ndarray
    variance: np.ndarray


def krige_grid(model: KrigingModel, grid, chunk: int = 4096, threads: int = 1) -> Raster:
    """Ordinary-kriging prediction and variance at every grid point.

    Chunks of grid points share one factorization and are independent, so
    ``threads > 1`` changes wall time only.
    """
    lat, lon = geo.as_coords(grid)
    if len(lat) == 0:
        raise ValidationError("grid is empty")
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    pred = np.empty(len(lat))
    var = np.empty(len(lat))
    n = model.n
    model._lu()

    def run(start):
        sl = slice(start, start + chunk)
        sol, rhs = model.solve(lat[sl], lon[sl])
        w = sol[:n]
        pred[sl] = model.values @ w
        var[sl] = np.sum(w * rhs[:n], axis=0) + sol[n]

    starts = range(0, len(lat), chunk)
    if threads == 1:
        for start in starts:
            run(start)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, starts))
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(var))):
        raise SingularSystem("kriging produced non-finite predictions")
    return Raster(lat, lon, pred, var)


def fit_kriging(lat, lon, values, n_bins: int = 10, metric: str = "haversine") -> KrigingModel:
    """Empirical semivariogram, power-law fit and kriging system in one step."""
    values = np.asarray(values, dtype=float)
    lat, lon = geo.as_coords((lat, lon))
    if len(values) < 3:
        raise InsufficientData("kriging needs at least 3 samples")
    emp = empirical_semivariogram(lat, lon, values, n_bins=n_bins, metric=metric)
    variogram = fit_variogram(emp)
    return KrigingModel(lat, lon, values, variogram, metric=metric)
