"""Hybrid ARIMA + two-MLP forecaster for daily generation series.

The ARIMA model produces the base forecast. A first MLP models the ARIMA
error series from its recent past. A second MLP (the association function)
maps ARIMA values and modeled errors to the next value of the series.

Association input for target time ``t`` is the concatenation, in this order:

* ``a_t, a_{t-1}, ..., a_{t-La+1}``   ARIMA one-step values (``lag_association_arima``)
* ``m_{t-1}, ..., m_{t-Lm}``          past modeled errors (``lag_association_error``)
* ``f_t, ..., f_{t+F-1}``             recursive error forecasts from origin ``t``
  (``forecast_association_error``)
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import arima as arima_mod
from . import neuralnet
from .arima import ArimaModel, ArimaOrder
from .errors import (AllZeroTruth, InsufficientTraining, LengthMismatch, MissingExog,
                     NonStationaryFit, TooShort, ValidationError)
from .evolution import Categorical, GaConfig, GaResult, Gene, Integer, run_ga
from .neuralnet import Mlp, MlpConfig

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8
LAG_DOMAIN = (1, 20)
HIDDEN_DOMAIN = (1, 128)
MIN_SEARCH_LENGTH = 50
LAG_NAMES = ("lag_error", "forecast_association_error", "lag_association_error",
             "lag_association_arima")
FITNESS_MODES = ("test", "validation")


@dataclass(frozen=True)
class LagConfig:
    lag_error: int = 5
    forecast_association_error: int = 3
    lag_association_error: int = 3
    lag_association_arima: int = 3

    def __post_init__(self):
        for name in LAG_NAMES:
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {v!r}")
            object.__setattr__(self, name, int(v))

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in LAG_NAMES}


@dataclass
class HybridConfig:
    arima_order: ArimaOrder = field(default_factory=lambda: ArimaOrder(1, 0, 0))
    error_mlp: MlpConfig = field(default_factory=MlpConfig)
    assoc_mlp: MlpConfig = field(default_factory=MlpConfig)
    lags: LagConfig = field(default_factory=LagConfig)
    exog_columns: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "arima_order": self.arima_order.to_list(),
            "error_mlp": self.error_mlp.to_dict(),
            "assoc_mlp": self.assoc_mlp.to_dict(),
            "lags": self.lags.to_dict(),
            "exog_columns": list(self.exog_columns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridConfig":
        return cls(ArimaOrder.from_list(d["arima_order"]), MlpConfig(**d["error_mlp"]),
                   MlpConfig(**d["assoc_mlp"]), LagConfig(**d["lags"]),
                   list(d.get("exog_columns", [])))


@dataclass
class Scaling:
    """Min-max parameters mapping raw series and exog columns to [0, 1]."""
    series_min: float
    series_max: float
    exog_min: np.ndarray = field(default_factory=lambda: np.empty(0))
    exog_max: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def fit(cls, series, exog=None) -> "Scaling":
        y = np.asarray(series, dtype=float)
        if exog is None:
            return cls(float(y.min()), float(y.max()))
        X = _as_matrix(exog)
        return cls(float(y.min()), float(y.max()), X.min(axis=0), X.max(axis=0))

    @staticmethod
    def _apply(v, lo, hi):
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.where(hi > lo, (v - lo) / span, 0.0)

    def series(self, y) -> np.ndarray:
        return self._apply(np.asarray(y, dtype=float), self.series_min, self.series_max)

    def exog(self, X) -> np.ndarray:
        return self._apply(_as_matrix(X), self.exog_min, self.exog_max)

    def unscale(self, y) -> np.ndarray:
        return self.series_min + np.asarray(y, dtype=float) * (self.series_max - self.series_min)

    def to_dict(self) -> dict:
        return {"series_min": self.series_min, "series_max": self.series_max,
                "exog_min": np.asarray(self.exog_min).tolist(),
                "exog_max": np.asarray(self.exog_max).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaling":
        return cls(float(d["series_min"]), float(d["series_max"]),
                   np.asarray(d["exog_min"], dtype=float), np.asarray(d["exog_max"], dtype=float))


@dataclass
class HybridModel:
    config: HybridConfig
    arima: ArimaModel
    error_mlp: Mlp
    assoc_mlp: Mlp
    split: int
    series: np.ndarray
    exog: Optional[np.ndarray] = None
    scaling: Optional[Scaling] = None

    @property
    def n(self) -> int:
        return len(self.series)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "association_input_order": ["arima_lags", "error_lags", "error_forecasts"],
            "split": self.split,
            "series": self.series.tolist(),
            "exog": None if self.exog is None else self.exog.tolist(),
            "scaling": None if self.scaling is None else self.scaling.to_dict(),
            "arima": self.arima.to_dict(),
            "error_mlp": self.error_mlp.to_dict(),
            "assoc_mlp": self.assoc_mlp.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridModel":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonStationaryFit)
            arima = ArimaModel.from_dict(d["arima"])
        exog = None if d.get("exog") is None else np.asarray(d["exog"], dtype=float)
        scaling = None if d.get("scaling") is None else Scaling.from_dict(d["scaling"])
        return cls(HybridConfig.from_dict(d["config"]), arima, Mlp.from_dict(d["error_mlp"]),
                   Mlp.from_dict(d["assoc_mlp"]), int(d["split"]),
                   np.asarray(d["series"], dtype=float), exog, scaling)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "HybridModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ForecastMetrics:
    mae: float
    mse: float
    mape: float

    def to_dict(self) -> dict:
        return {"mae": self.mae, "mse": self.mse, "mape": self.mape}


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def error_series(y, arima_fitted) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    f = np.asarray(arima_fitted, dtype=float)
    if y.shape != f.shape:
        raise LengthMismatch(f"series length {y.shape} vs fitted length {f.shape}")
    return y - f


def make_supervised(series, lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sliding windows: row ``i`` is ``series[i:i+lag]``, target ``series[i+lag]``."""
    s = np.asarray(series, dtype=float).ravel()
    if lag < 1:
        raise ValidationError("lag must be >= 1")
    if len(s) <= lag:
        raise TooShort(f"series of length {len(s)} has no windows of lag {lag}")
    X = np.lib.stride_tricks.sliding_window_view(s, lag)[:-1].copy()
    return X, s[lag:].copy()


def metrics(y_true, y_pred) -> ForecastMetrics:
    """MAE, MSE and MAPE (as a fraction); zero truths are left out of MAPE."""
    y = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if y.shape != p.shape or len(y) == 0:
        raise LengthMismatch(f"need equal non-empty lengths, got {len(y)} and {len(p)}")
    e = p - y
    nz = y != 0
    if not nz.any():
        raise AllZeroTruth("MAPE is undefined when every true value is zero")
    if not nz.all():
        warnings.warn(f"{int((~nz).sum())} zero values left out of MAPE", RuntimeWarning,
                      stacklevel=2)
    return ForecastMetrics(float(np.mean(np.abs(e))), float(np.mean(e * e)),
                           float(np.mean(np.abs(e[nz] / y[nz]))))


def _recursive(mlp: Mlp, windows: np.ndarray, steps: int) -> np.ndarray:
    """Iterate one-step error forecasts; returns (rows, steps)."""
    W = windows.copy()
    out = np.empty((W.shape[0], steps))
    for j in range(steps):
        p = neuralnet.predict(mlp, W)
        out[:, j] = p
        W = np.hstack([W[:, 1:], p[:, None]])
    return out


def _assoc_rows(lags: LagConfig, A: np.ndarray, M: np.ndarray, F: np.ndarray,
                targets: np.ndarray) -> np.ndarray:
    La, Lm = lags.lag_association_arima, lags.lag_association_error
    ta = targets[:, None] - np.arange(La)[None, :]
    tm = targets[:, None] - 1 - np.arange(Lm)[None, :]
    return np.hstack([A[ta], M[tm], F])


def _first_target(lags: LagConfig, s0: int) -> int:
    return max(s0 + lags.lag_association_arima - 1,
               s0 + lags.lag_error + lags.lag_association_error)


@dataclass
class _Trace:
    """ARIMA one-step values, errors and modeled errors over ``[0, origin)``."""
    arima: ArimaModel
    a: np.ndarray
    e: np.ndarray
    m: np.ndarray


def _trace(arima: ArimaModel, error_mlp: Mlp, lag_error: int) -> _Trace:
    y = arima.series
    T, s0 = len(y), arima.start
    a = np.full(T, np.nan)
    a[s0:] = arima.fitted_values
    e = np.full(T, np.nan)
    e[s0:] = error_series(y[s0:], arima.fitted_values)
    m = np.full(T, np.nan)
    if T - s0 > lag_error:
        Xe, _ = make_supervised(e[s0:], lag_error)
        m[s0 + lag_error:] = neuralnet.predict(error_mlp, Xe)
    return _Trace(arima, a, e, m)


def _check_unit(series) -> np.ndarray:
    y = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValidationError("series must be finite")
    if len(y) and (y.min() < -1e-9 or y.max() > 1 + 1e-9):
        raise ValidationError("series must be scaled to [0, 1]")
    return y


def fit_hybrid(config: HybridConfig, series, exog=None, split: Optional[int] = None,
               arima: Optional[ArimaModel] = None, scaling: Optional[Scaling] = None
               ) -> HybridModel:
    """Fit ARIMA, error MLP and association MLP on ``series[:split]``.

    ``split`` defaults to 80% of the series. A pre-fitted ``arima`` on the
    training span may be passed to skip refitting.
    """
    y = _check_unit(series)
    X = None if exog is None else _as_matrix(exog)
    if X is not None and X.shape[0] != len(y):
        raise LengthMismatch(f"exog has {X.shape[0]} rows for {len(y)} observations")
    if X is not None and X.shape[1] == 0:
        X = None
    T = int(math.floor(TRAIN_FRACTION * len(y))) if split is None else int(split)
    if not 0 < T <= len(y):
        raise ValidationError(f"split {T} outside the series")
    lags = config.lags
    order = config.arima_order
    s0 = order.diff_span + order.ar_span
    t0 = _first_target(lags, s0)
    if T - t0 < 2 or T - s0 - lags.lag_error < 2:
        raise InsufficientTraining(
            f"training span of {T} points is too short for lags {lags.to_dict()}")
    if arima is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonStationaryFit)
            arima = arima_mod.fit(y[:T], order, None if X is None else X[:T])
    elif len(arima.series) != T:
        raise ValidationError("pre-fitted ARIMA does not cover the training span")

    e = error_series(y[s0:T], arima.fitted_values)
    Xe, ye = make_supervised(e, lags.lag_error)
    error_mlp = neuralnet.train(neuralnet.init(config.error_mlp, lags.lag_error), Xe, ye)

    tr = _trace(arima, error_mlp, lags.lag_error)
    targets = np.arange(t0, T)
    windows = np.stack([tr.e[t - lags.lag_error:t] for t in targets])
    F = _recursive(error_mlp, windows, lags.forecast_association_error)
    Xa = _assoc_rows(lags, tr.a, tr.m, F, targets)
    assoc = neuralnet.train(neuralnet.init(config.assoc_mlp, Xa.shape[1]), Xa, y[targets])
    return HybridModel(config, arima, error_mlp, assoc, T, y, X, scaling)


def _conditioned(model: HybridModel, origin: int) -> ArimaModel:
    """ARIMA with the fitted coefficients, filtered over ``series[:origin]``."""
    if origin == model.split:
        return model.arima
    a = model.arima
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonStationaryFit)
        return arima_mod.from_coefficients(
            a.order, model.series[:origin], params=a.params, intercept=a.intercept,
            exog=None if model.exog is None else model.exog[:origin],
            exog_coef=a.exog_coef, include_intercept=a.include_intercept)


def predict_hybrid(model: HybridModel, horizon: int, exog_future=None,
                   origin: Optional[int] = None, clip: bool = True) -> np.ndarray:
    """Forecast ``horizon`` steps after ``origin`` (default: the train/test split).

    ``origin`` may be any index in ``[split, n]``; the ARIMA coefficients and
    both networks stay fixed while the observed history up to ``origin`` is used.
    """
    if int(horizon) != horizon or horizon < 1:
        raise ValidationError("horizon must be a positive integer")
    horizon = int(horizon)
    T = model.split if origin is None else int(origin)
    if not model.split <= T <= model.n:
        raise ValidationError(f"origin must lie in [{model.split}, {model.n}]")
    if model.exog is not None:
        if exog_future is None:
            raise MissingExog("model uses exogenous regressors; exog_future required")
        exog_future = _as_matrix(exog_future)
    lags = model.config.lags
    Le, F = lags.lag_error, lags.forecast_association_error
    tr = _trace(_conditioned(model, T), model.error_mlp, Le)
    a_future = arima_mod.forecast(tr.arima, horizon, exog_future)
    g = _recursive(model.error_mlp, tr.e[None, T - Le:T], horizon + F - 1)[0]
    A = np.concatenate([tr.a, a_future])
    M = np.concatenate([tr.m, g[:horizon]])
    targets = np.arange(T, T + horizon)
    Fm = np.stack([g[j:j + F] for j in range(horizon)])
    out = neuralnet.predict(model.assoc_mlp, _assoc_rows(lags, A, M, Fm, targets))
    return np.clip(out, 0.0, 1.0) if clip else out


def in_sample(model: HybridModel) -> Dict[str, np.ndarray]:
    """Hybrid and ARIMA one-step values over the association training rows."""
    lags = model.config.lags
    tr = _trace(model.arima, model.error_mlp, lags.lag_error)
    T = model.split
    targets = np.arange(_first_target(lags, model.arima.start), T)
    windows = np.stack([tr.e[t - lags.lag_error:t] for t in targets])
    F = _recursive(model.error_mlp, windows, lags.forecast_association_error)
    hybrid = neuralnet.predict(model.assoc_mlp, _assoc_rows(lags, tr.a, tr.m, F, targets))
    return {"index": targets, "truth": model.series[targets], "hybrid": hybrid,
            "arima": tr.a[targets]}


def held_out_exog(model: HybridModel) -> Optional[np.ndarray]:
    return None if model.exog is None else model.exog[model.split:]


def evaluate(model: HybridModel) -> Dict[str, ForecastMetrics]:
    """Hybrid and pure-ARIMA metrics over the held-out test span."""
    h = model.n - model.split
    if h < 1:
        raise ValidationError("model has no test span")
    truth = model.series[model.split:]
    hyb = predict_hybrid(model, h, held_out_exog(model))
    base = arima_mod.forecast(model.arima, h, held_out_exog(model))
    return {"hybrid": metrics(truth, hyb), "arima": metrics(truth, base)}


# -- genetic search -----------------------------------------------------------

def _mlp_genes(prefix: str) -> Dict[str, Gene]:
    lo, hi = HIDDEN_DOMAIN
    genes: Dict[str, Gene] = {
        f"{prefix}_activation": Categorical(neuralnet.ACTIVATIONS),
        f"{prefix}_lr_schedule": Categorical(neuralnet.SCHEDULES),
        f"{prefix}_solver": Categorical(neuralnet.SOLVERS),
    }
    for i in range(1, 4):
        genes[f"{prefix}_h{i}"] = Integer(lo, hi)
    return genes


def search_space(overrides: Optional[Mapping[str, Gene]] = None) -> Dict[str, Gene]:
    space = {**_mlp_genes("error"), **_mlp_genes("assoc")}
    for name in LAG_NAMES:
        space[name] = Integer(*LAG_DOMAIN)
    for name, gene in (overrides or {}).items():
        if name not in space:
            raise ValidationError(f"unknown search gene {name!r}")
        space[name] = gene
    return space


def config_from_genome(genome: Mapping, order: ArimaOrder, seed: int,
                       mlp_base: Optional[Mapping] = None,
                       exog_columns: Sequence[str] = ()) -> HybridConfig:
    base = dict(mlp_base or {})

    def mlp(prefix, s):
        return MlpConfig(activation=genome[f"{prefix}_activation"],
                         lr_schedule=genome[f"{prefix}_lr_schedule"],
                         solver=genome[f"{prefix}_solver"],
                         hidden_layers=tuple(genome[f"{prefix}_h{i}"] for i in range(1, 4)),
                         seed=s, **base)

    lags = LagConfig(**{n: genome[n] for n in LAG_NAMES})
    return HybridConfig(order, mlp("error", seed), mlp("assoc", seed + 1), lags,
                        list(exog_columns))


@dataclass
class SearchResult:
    model: HybridModel
    ga: GaResult = field(repr=False)
    comparison: Dict[str, ForecastMetrics] = field(default_factory=dict)
    fitness_mode: str = "test"

    @property
    def history(self) -> List[float]:
        return self.ga.history

    def report(self) -> dict:
        comp = {k: v.to_dict() for k, v in self.comparison.items()}
        return {
            "fitness_mode": self.fitness_mode,
            "split": self.model.split,
            "n": self.model.n,
            "best_genome": self.ga.best_genome,
            "best_fitness": self.ga.best_fitness,
            "history": self.ga.history,
            "comparison": comp,
            "hybrid_beats_arima": comp["hybrid"]["mae"] < comp["arima"]["mae"],
        }


def search_hybrid(series, exog=None, ga: GaConfig = GaConfig(),
                  overrides: Optional[Mapping[str, Gene]] = None,
                  order: ArimaOrder = ArimaOrder(1, 0, 0),
                  fitness_mode: str = "test", mlp_base: Optional[Mapping] = None,
                  exog_columns: Sequence[str] = (), checkpoint_dir=None,
                  threads: int = 1) -> SearchResult:
    """Genetic search over both MLP configurations and the four lag variables.

    The raw series (and exog) are min-max scaled to [0, 1] first. Fitness is
    the hybrid MAE on the last 20% of the series, or with
    ``fitness_mode="validation"`` on the last 20% of the training span, in
    which case the test span is only touched by the final comparison.
    """
    if fitness_mode not in FITNESS_MODES:
        raise ValidationError(f"fitness_mode must be one of {FITNESS_MODES}")
    raw = np.asarray(series, dtype=float).ravel()
    if len(raw) < MIN_SEARCH_LENGTH:
        raise TooShort(f"search needs at least {MIN_SEARCH_LENGTH} points, got {len(raw)}")
    if not np.all(np.isfinite(raw)):
        raise ValidationError("series must be finite")
    X_raw = None if exog is None else _as_matrix(exog)
    if X_raw is not None and X_raw.shape[0] != len(raw):
        raise LengthMismatch(f"exog has {X_raw.shape[0]} rows for {len(raw)} observations")
    scaling = Scaling.fit(raw, X_raw)
    y = scaling.series(raw)
    X = None if X_raw is None else scaling.exog(X_raw)
    split = int(math.floor(TRAIN_FRACTION * len(y)))

    if fitness_mode == "test":
        fit_y, fit_X, fit_split = y, X, split
    else:
        fit_y = y[:split]
        fit_X = None if X is None else X[:split]
        fit_split = int(math.floor(TRAIN_FRACTION * split))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonStationaryFit)
        base_arima = arima_mod.fit(fit_y[:fit_split], order,
                                   None if fit_X is None else fit_X[:fit_split])
    space = search_space(overrides)
    cols = list(exog_columns)
    gen_models: Dict[str, HybridModel] = {}
    best_model: List[Optional[HybridModel]] = [None]

    def fitness(genome, seed):
        cfg = config_from_genome(genome, order, seed, mlp_base, cols)
        model = fit_hybrid(cfg, fit_y, fit_X, fit_split, arima=base_arima)
        h = len(fit_y) - fit_split
        pred = predict_hybrid(model, h, held_out_exog(model))
        if checkpoint_dir is not None:
            gen_models[json.dumps(list(genome.items()))] = model
        return metrics(fit_y[fit_split:], pred).mae

    def on_generation(gen, population, scores, best_genome):
        hit = gen_models.get(json.dumps(list(best_genome.items())))
        if hit is not None:
            best_model[0] = hit
        gen_models.clear()
        if best_model[0] is not None:
            path = Path(checkpoint_dir) / f"generation_{gen:03d}_best_model.json"
            best_model[0].save(path)

    ga_result = run_ga(space, fitness, ga, checkpoint_dir=checkpoint_dir, threads=threads,
                       on_generation=on_generation if checkpoint_dir is not None else None)
    if not math.isfinite(ga_result.best_fitness):
        raise InsufficientTraining("no genome produced a usable hybrid model")
    cfg = config_from_genome(ga_result.best_genome, order, ga_result.best_seed, mlp_base, cols)
    final = fit_hybrid(cfg, y, X, split, scaling=scaling)
    logger.info("best hybrid genome %s (fitness %.6g)", ga_result.best_genome,
                ga_result.best_fitness)
    return SearchResult(final, ga_result, evaluate(final), fitness_mode)


def replace_assoc(model: HybridModel, assoc: Mlp) -> HybridModel:
    return replace(model, assoc_mlp=assoc)
