"""Production estimate from covariance and correlation with a target variable.

Over a normalized cube with row vector ``x``, the estimate is

    E(x) = sum_i a_i * x_i**2 + sum_i b_i * x_i

where ``a`` is the covariance row and ``b`` the correlation row of the target
(direct normal irradiation by default). Variables known to reduce generation
have their weights forced negative.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .datacube import DataCube
from .errors import MissingVariable, RowMismatch, TooFewRows, UnknownVariable, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_TARGET = "direct_normal"
DEFAULT_FLIP = ("avg_max_temp", "avg_rel_humidity", "total_precipitation")
# cube columns that are outputs or references, not explanatory variables
EXCLUDED = ("capacity_factor", "pvgis_monthly_mean")


@dataclass
class CovCorWeights:
    variable_names: List[str]
    a: np.ndarray
    b: np.ndarray
    flipped: List[str]
    target: str
    flip_covariance: bool = True

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        n = len(self.variable_names)
        if self.a.shape != (n,) or self.b.shape != (n,):
            raise ValidationError("weight vectors must match the variable list")
        if np.any(np.abs(self.b) > 1.0 + 1e-12):
            raise ValidationError("correlation weights must lie in [-1, 1]")
        if not set(self.flipped) <= set(self.variable_names):
            raise ValidationError("flipped names must be variables")

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "variables": list(self.variable_names),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "flipped": list(self.flipped),
            "flip_covariance": self.flip_covariance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovCorWeights":
        return cls(list(d["variables"]), d["a"], d["b"], list(d["flipped"]), d["target"],
                   bool(d.get("flip_covariance", True)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CovCorWeights":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class EstimateField:
    lat: np.ndarray
    lon: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if not (len(self.lat) == len(self.lon) == len(self.value)):
            raise ValidationError("estimate field columns differ in length")
        if not np.all(np.isfinite(self.value)):
            raise ValidationError("estimate field contains non-finite values")


@dataclass
class CovCor:
    names: List[str]
    K: np.ndarray
    R: np.ndarray
    warnings: List[str] = field(default_factory=list)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariable(f"{name!r} is not a cube variable") from None


def variables(cube: DataCube, exclude: Iterable[str] = EXCLUDED) -> List[str]:
    ex = set(exclude)
    return [n for n in cube.names if n not in ex]


def cov_corr(cube: DataCube, names: Optional[Sequence[str]] = None) -> CovCor:
    """Sample covariance (n - 1 denominator) and Pearson correlation of cube columns.

    Constant columns get zero correlation everywhere, including the diagonal.
    """
    names = variables(cube) if names is None else list(names)
    for n in names:
        if n not in cube.table.columns:
            raise MissingVariable(f"cube has no column {n!r}")
    X = cube.table.matrix(names)
    if X.shape[0] < 2:
        raise TooFewRows("covariance needs at least 2 rows")
    centered = X - X.mean(axis=0)
    K = centered.T @ centered / (X.shape[0] - 1)
    std = np.sqrt(np.diag(K))
    ok = std > 0
    R = np.zeros_like(K)
    idx = np.flatnonzero(ok)
    R[np.ix_(idx, idx)] = K[np.ix_(idx, idx)] / np.outer(std[idx], std[idx])
    R = np.clip(R, -1.0, 1.0)
    R[idx, idx] = 1.0
    warns = []
    for i in np.flatnonzero(~ok):
        warns.append(f"column {names[i]!r} is constant; correlation set to 0")
        logger.warning(warns[-1])
    return CovCor(names, K, R, warns)


def build_weights(cc: CovCor, target: str = DEFAULT_TARGET,
                  flip: Optional[Iterable[str]] = None,
                  flip_covariance: bool = True) -> CovCorWeights:
    """Take the target's covariance and correlation rows and apply the sign rule.

    Every name in ``flip`` has its correlation (and, with ``flip_covariance``,
    its covariance) entry negated when positive. With ``flip=None`` the
    default set is used, restricted to names present in the cube.
    """
    t = cc.index(target)
    if flip is None:
        flip = [n for n in DEFAULT_FLIP if n in cc.names]
    else:
        flip = list(dict.fromkeys(flip))
        for name in flip:
            cc.index(name)
    a = cc.K[t].copy()
    b = cc.R[t].copy()
    flipped = []
    for name in flip:
        i = cc.index(name)
        if b[i] > 0:
            b[i] = -b[i]
        if flip_covariance and a[i] > 0:
            a[i] = -a[i]
        flipped.append(name)
    return CovCorWeights(list(cc.names), a, b, flipped, target, flip_covariance)


def estimate_values(weights: CovCorWeights, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (X * X) @ weights.a + X @ weights.b


def estimate(weights: CovCorWeights, cube: DataCube) -> EstimateField:
    missing = [n for n in weights.variable_names if n not in cube.table.columns]
    if missing:
        raise MissingVariable(f"cube lacks variables {missing}")
    X = cube.table.matrix(weights.variable_names)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValidationError("cube values must be normalized to [0, 1]")
    return EstimateField(cube.table.lat, cube.table.lon, estimate_values(weights, X))


def rescale(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def evaluate_field(est: EstimateField, reference: EstimateField,
                   rescale_first: bool = True) -> Dict[str, float]:
    """MSE and MAE, by default after min-max rescaling each field to [0, 1] independently.

    With ``rescale_first=False`` the fields are compared as given.
    """
    if len(est.value) != len(reference.value):
        raise RowMismatch(f"{len(est.value)} estimate rows vs {len(reference.value)} reference rows")
    if len(est.value) == 0:
        raise RowMismatch("fields are empty")
    if rescale_first:
        diff = rescale(est.value) - rescale(reference.value)
    else:
        diff = est.value - reference.value
    return {"mse": float(np.mean(diff ** 2)), "mae": float(np.mean(np.abs(diff)))}


def align_field(field_: EstimateField, lat, lon, tol: float = 1e-6) -> EstimateField:
    """Reorder ``field_`` to the given locations (exact match within ``tol`` degrees)."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if len(lat) != len(field_.lat):
        raise RowMismatch(f"{len(field_.lat)} field rows vs {len(lat)} locations")
    d = np.abs(lat[:, None] - field_.lat[None, :]) + np.abs(lon[:, None] - field_.lon[None, :])
    idx = np.argmin(d, axis=1)
    if np.any(d[np.arange(len(lat)), idx] > tol) or len(set(idx.tolist())) != len(idx):
        raise RowMismatch("field locations do not match the cube rows")
    return EstimateField(lat, lon, field_.value[idx])
