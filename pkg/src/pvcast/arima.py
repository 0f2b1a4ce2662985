"""Seasonal ARIMA with exogenous regressors, fitted by conditional sum of squares.

On the differenced series ``w`` the model is

    phi(B) Phi(B^s) w_t = c + beta . x_t + theta(B) Theta(B^s) e_t

with ``x`` the identically differenced exogenous columns. Pre-sample
residuals are zero and the first ``p + P*s`` differenced values are
conditioned on. For fixed ARMA coefficients the residuals are linear in
``(c, beta)``, so those are solved by least squares inside every objective
evaluation while a Nelder-Mead simplex searches the ARMA coefficients.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import MissingExog, NonStationaryFit, TooShort, ValidationError

logger = logging.getLogger(__name__)

_PENALTY = 1e300


@dataclass(frozen=True)
class ArimaOrder:
    p: int = 1
    d: int = 0
    q: int = 0
    seasonal: Optional[Tuple[int, int, int, int]] = None

    def __post_init__(self):
        for name in ("p", "d", "q"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 0:
                raise ValidationError(f"order {name} must be a non-negative integer")
        if self.seasonal is not None:
            if len(self.seasonal) != 4:
                raise ValidationError("seasonal order is (P, D, Q, s)")
            P, D, Q, s = (int(v) for v in self.seasonal)
            if min(P, D, Q) < 0:
                raise ValidationError("seasonal orders must be non-negative")
            if s < 2 or s <= max(1, D):
                raise ValidationError("seasonal period s must be >= 2 and exceed D")
            object.__setattr__(self, "seasonal", (P, D, Q, s))

    @property
    def seasonal_tuple(self) -> Tuple[int, int, int, int]:
        return self.seasonal if self.seasonal is not None else (0, 0, 0, 1)

    @property
    def ar_span(self) -> int:
        P, _, _, s = self.seasonal_tuple
        return self.p + P * s

    @property
    def diff_span(self) -> int:
        _, D, _, s = self.seasonal_tuple
        return self.d + D * s

    @property
    def trivial(self) -> bool:
        """No AR/MA terms and no differencing: only an intercept can be fitted."""
        return self.n_arma == 0 and self.diff_span == 0

    @property
    def n_arma(self) -> int:
        P, _, Q, _ = self.seasonal_tuple
        return self.p + self.q + P + Q

    def to_list(self) -> list:
        return [self.p, self.d, self.q, list(self.seasonal) if self.seasonal else None]

    @classmethod
    def from_list(cls, v) -> "ArimaOrder":
        return cls(int(v[0]), int(v[1]), int(v[2]), tuple(v[3]) if v[3] else None)


def difference(series, d: int = 0, seasonal_D: int = 0, s: int = 1) -> np.ndarray:
    """``d`` first differences followed by ``seasonal_D`` lag-``s`` differences.

    Works column-wise on 2-D input.
    """
    x = np.asarray(series, dtype=float)
    if d < 0 or seasonal_D < 0:
        raise ValidationError("differencing orders must be non-negative")
    if seasonal_D and s < 2:
        raise ValidationError("seasonal differencing needs s >= 2")
    if len(x) <= d + seasonal_D * s:
        raise TooShort(f"series of length {len(x)} too short for d={d}, D={seasonal_D}, s={s}")
    for _ in range(d):
        x = x[1:] - x[:-1]
    for _ in range(seasonal_D):
        x = x[s:] - x[:-s]
    return x


def _diff_poly(order: ArimaOrder) -> np.ndarray:
    """Coefficients (increasing powers of B) of (1 - B)^d (1 - B^s)^D."""
    _, D, _, s = order.seasonal_tuple
    poly = np.array([1.0])
    for _ in range(order.d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(s + 1)
    seasonal[0], seasonal[-1] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def _lag_poly(coefs, step: int, sign: float) -> np.ndarray:
    poly = np.zeros(len(coefs) * step + 1)
    poly[0] = 1.0
    for i, c in enumerate(coefs, start=1):
        poly[i * step] = sign * c
    return poly


def _expand(order: ArimaOrder, params: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Full AR coefficients (w_t = sum ar_k w_{t-k} + ...) and MA coefficients by lag."""
    P, _, Q, s = order.seasonal_tuple
    p, q = order.p, order.q
    ar, ma = params[:p], params[p:p + q]
    sar, sma = params[p + q:p + q + P], params[p + q + P:p + q + P + Q]
    ar_poly = np.convolve(_lag_poly(ar, 1, -1.0), _lag_poly(sar, s, -1.0))
    ma_poly = np.convolve(_lag_poly(ma, 1, 1.0), _lag_poly(sma, s, 1.0))
    return -ar_poly[1:], ma_poly[1:]


def _ar_part(w: np.ndarray, ar_full: np.ndarray, start: int) -> np.ndarray:
    out = w[start:].copy()
    for k, c in enumerate(ar_full, start=1):
        if c != 0.0:
            out -= c * w[start - k:len(w) - k]
    return out


def _ma_inverse(x: np.ndarray, ma_full: np.ndarray) -> np.ndarray:
    if not np.any(ma_full):
        return x
    return lfilter([1.0], np.concatenate([[1.0], ma_full]), x, axis=0)


def _regressors(m: int, start: int, intercept: bool, xreg: Optional[np.ndarray]) -> np.ndarray:
    cols = []
    if intercept:
        cols.append(np.ones((m - start, 1)))
    if xreg is not None:
        cols.append(xreg[start:])
    return np.hstack(cols) if cols else np.empty((m - start, 0))


def _css(w, xreg, order, params, intercept, gamma=None):
    """Residuals (len m - start) and regression coefficients for given ARMA params."""
    start = order.ar_span
    ar_full, ma_full = _expand(order, params)
    u = _ma_inverse(_ar_part(w, ar_full, start), ma_full)
    R = _regressors(len(w), start, intercept, xreg)
    if R.shape[1] == 0:
        return u, np.empty(0)
    V = _ma_inverse(R, ma_full)
    if gamma is None:
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(u))):
            return np.full_like(u, np.inf), np.zeros(R.shape[1])
        gamma = np.linalg.lstsq(V, u, rcond=None)[0]
    return u - V @ gamma, gamma


def _yule_walker(x: np.ndarray, lags: Sequence[int]) -> np.ndarray:
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0 or not lags:
        return np.zeros(len(lags))
    maxlag = max(lags)

    def acf(k):
        return float(np.dot(x[k:], x[:len(x) - k])) / denom if k < len(x) else 0.0

    r = np.array([acf(k) for k in range(maxlag + 1)])
    T = np.array([[r[abs(i - j)] for j in lags] for i in lags])
    rhs = np.array([r[k] for k in lags])
    try:
        sol = np.linalg.solve(T, rhs)
    except np.linalg.LinAlgError:
        return np.zeros(len(lags))
    return np.clip(sol, -0.95, 0.95)


@dataclass
class ArimaModel:
    order: ArimaOrder
    params: np.ndarray
    intercept: float
    exog_coef: np.ndarray
    include_intercept: bool
    series: np.ndarray
    exog: Optional[np.ndarray] = None
    fitted_values: np.ndarray = field(default=None, repr=False)
    residuals: np.ndarray = field(default=None, repr=False)
    css: float = 0.0
    stationary: bool = True

    @property
    def ar(self) -> np.ndarray:
        return self.params[:self.order.p]

    @property
    def ma(self) -> np.ndarray:
        return self.params[self.order.p:self.order.p + self.order.q]

    @property
    def seasonal_ar(self) -> np.ndarray:
        P = self.order.seasonal_tuple[0]
        o = self.order.p + self.order.q
        return self.params[o:o + P]

    @property
    def seasonal_ma(self) -> np.ndarray:
        P, _, Q, _ = self.order.seasonal_tuple
        o = self.order.p + self.order.q + P
        return self.params[o:o + Q]

    @property
    def start(self) -> int:
        """Index into ``series`` of the first fitted value."""
        return self.order.diff_span + self.order.ar_span

    @property
    def sigma2(self) -> float:
        return float(np.mean(self.residuals ** 2)) if len(self.residuals) else 0.0

    def to_dict(self) -> dict:
        return {
            "order": self.order.to_list(),
            "params": self.params.tolist(),
            "intercept": self.intercept,
            "exog_coef": self.exog_coef.tolist(),
            "include_intercept": self.include_intercept,
            "series": self.series.tolist(),
            "exog": None if self.exog is None else self.exog.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArimaModel":
        order = ArimaOrder.from_list(d["order"])
        exog = None if d.get("exog") is None else np.asarray(d["exog"], dtype=float)
        return from_coefficients(order, d["series"], params=d["params"],
                                 intercept=d["intercept"], exog=exog,
                                 exog_coef=d["exog_coef"],
                                 include_intercept=d["include_intercept"])


def _gamma_vector(include_intercept, intercept, exog_coef):
    parts = ([intercept] if include_intercept else []) + list(exog_coef)
    return np.asarray(parts, dtype=float)


def _prepare(series, order: ArimaOrder, exog):
    y = np.asarray(series, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValidationError("series must be finite")
    X = None
    if exog is not None:
        X = np.asarray(exog, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != len(y):
            raise ValidationError(f"exog has {X.shape[0]} rows for a series of {len(y)}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("exog must be finite")
        if X.shape[1] == 0:
            X = None
    _, D, _, s = order.seasonal_tuple
    w = difference(y, order.d, D, s)
    xreg = difference(X, order.d, D, s) if X is not None else None
    return y, X, w, xreg


def _finish(order, y, X, w, xreg, params, gamma, include_intercept) -> ArimaModel:
    e, _ = _css(w, xreg, order, params, include_intercept, gamma)
    start = order.diff_span + order.ar_span
    fitted = y[start:] - e
    intercept = float(gamma[0]) if include_intercept else 0.0
    exog_coef = gamma[1:] if include_intercept else gamma
    ar_full, _ = _expand(order, params)
    roots = np.roots(np.concatenate([[1.0], -ar_full])[::-1]) if np.any(ar_full) else []
    stationary = bool(np.all(np.abs(roots) > 1.0))
    if not stationary:
        warnings.warn("fitted AR polynomial has roots on or inside the unit circle",
                      NonStationaryFit, stacklevel=3)
    return ArimaModel(order, np.asarray(params, dtype=float), intercept,
                      np.asarray(exog_coef, dtype=float), include_intercept, y, X,
                      fitted, e, float(np.dot(e, e)), stationary)


def from_coefficients(order: ArimaOrder, series, params=(), intercept: float = 0.0,
                      exog=None, exog_coef=(), include_intercept: Optional[bool] = None
                      ) -> ArimaModel:
    """Model with given coefficients (ar, ma, seasonal ar, seasonal ma in that order)."""
    y, X, w, xreg = _prepare(series, order, exog)
    params = np.asarray(params, dtype=float).ravel()
    if len(params) != order.n_arma:
        raise ValidationError(f"expected {order.n_arma} ARMA coefficients, got {len(params)}")
    if include_intercept is None:
        include_intercept = intercept != 0.0
    exog_coef = np.asarray(exog_coef, dtype=float).ravel()
    if (X.shape[1] if X is not None else 0) != len(exog_coef):
        raise ValidationError("exog_coef does not match the exog columns")
    if len(w) <= order.ar_span:
        raise TooShort("series too short for the AR span")
    gamma = _gamma_vector(include_intercept, intercept, exog_coef)
    return _finish(order, y, X, w, xreg, params, gamma, include_intercept)


def fit(series, order: ArimaOrder, exog=None, include_intercept: Optional[bool] = None,
        max_iter: Optional[int] = None) -> ArimaModel:
    """Conditional-sum-of-squares fit.

    The intercept defaults to on for undifferenced models and off otherwise.
    """
    y, X, w, xreg = _prepare(series, order, exog)
    if include_intercept is None:
        include_intercept = order.diff_span == 0
    if order.trivial and not include_intercept:
        raise ValidationError("order (0, 0, 0) needs an intercept")
    n_reg = int(include_intercept) + (X.shape[1] if X is not None else 0)
    usable = len(w) - order.ar_span
    if usable < order.n_arma + n_reg + 1:
        raise TooShort(f"series of length {len(y)} too short for order {order.to_list()}")

    def objective(theta):
        e, _ = _css(w, xreg, order, theta, include_intercept)
        val = float(np.dot(e, e))
        return val if np.isfinite(val) else _PENALTY

    k = order.n_arma
    best = np.zeros(k)
    if k:
        f_start = objective(best)
        opts = {"xatol": 1e-10, "fatol": 1e-14, "maxiter": max_iter or 2000 * k,
                "maxfev": max_iter or 4000 * k}
        res = minimize(objective, best, method="Nelder-Mead", options=opts)
        candidates = [(f_start, best), (res.fun, res.x)]
        if not res.success:
            P, _, _, s = order.seasonal_tuple
            x0 = np.zeros(k)
            x0[:order.p] = _yule_walker(w, list(range(1, order.p + 1)))
            o = order.p + order.q
            x0[o:o + P] = _yule_walker(w, [s * j for j in range(1, P + 1)])
            logger.info("simplex did not converge; restarting from Yule-Walker estimates")
            res2 = minimize(objective, x0, method="Nelder-Mead", options=opts)
            candidates.append((res2.fun, res2.x))
        best = min(candidates, key=lambda c: c[0])[1]
    _, gamma = _css(w, xreg, order, best, include_intercept)
    return _finish(order, y, X, w, xreg, best, gamma, include_intercept)


def forecast(model: ArimaModel, horizon: int, exog_future=None) -> np.ndarray:
    """Recursive multi-step forecast with future shocks set to zero."""
    if int(horizon) != horizon or horizon < 1:
        raise ValidationError("horizon must be a positive integer")
    horizon = int(horizon)
    order = model.order
    _, D, _, s = order.seasonal_tuple
    xf = None
    if model.exog is not None:
        if exog_future is None:
            raise MissingExog("model uses exogenous regressors; exog_future required")
        Xf = np.asarray(exog_future, dtype=float)
        if Xf.ndim == 1:
            Xf = Xf[:, None]
        if Xf.shape != (horizon, model.exog.shape[1]):
            raise MissingExog(
                f"exog_future must have shape ({horizon}, {model.exog.shape[1]}), got {Xf.shape}")
        full = np.vstack([model.exog, Xf])
        xf = difference(full, order.d, D, s)[-horizon:]
    y = model.series
    w = list(difference(y, order.d, D, s))
    e = [0.0] * order.ar_span + list(model.residuals)
    ar_full, ma_full = _expand(order, model.params)
    out_w = []
    for h in range(horizon):
        val = model.intercept if model.include_intercept else 0.0
        if xf is not None:
            val += float(xf[h] @ model.exog_coef)
        t = len(w)
        for k, c in enumerate(ar_full, start=1):
            if c != 0.0:
                val += c * w[t - k]
        for j, c in enumerate(ma_full, start=1):
            if c != 0.0 and t - j < len(e):
                val += c * e[t - j]
        w.append(val)
        e.append(0.0)
        out_w.append(val)
    # undo differencing: y_t = w_t - sum_k delta_k y_{t-k}
    delta = _diff_poly(order)
    hist = list(y)
    out = []
    for val in out_w:
        t = len(hist)
        level = val - sum(delta[k] * hist[t - k] for k in range(1, len(delta)))
        hist.append(level)
        out.append(level)
    return np.asarray(out)


def select_order(series, d: int = 0, max_p: int = 2, max_q: int = 2, exog=None,
                 seasonal=None) -> ArimaModel:
    """Grid search over p, q by a CSS information criterion (m*log(css/m) + 2k)."""
    best, best_score = None, np.inf
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            try:
                order = ArimaOrder(p, d, q, seasonal)
            except ValidationError:
                continue
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NonStationaryFit)
                    model = fit(series, order, exog)
            except TooShort:
                continue
            m = len(model.residuals)
            k = order.n_arma + len(model.exog_coef) + int(model.include_intercept)
            score = m * np.log(max(model.css, 1e-300) / m) + 2 * k
            if score < best_score:
                best, best_score = model, score
    if best is None:
        raise TooShort("no candidate order could be fitted")
    return best
