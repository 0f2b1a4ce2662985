"""Pool of configurable regressors used as committee members.

Each member kind has a parameter schema (valid range, GA search range and the
library default). Fitting is delegated to scikit-learn; the fitted state is
exported to plain arrays so a model restored from JSON predicts without the
original estimator object.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.ensemble import (
    AdaBoostRegressor,
    BaggingRegressor,
    GradientBoostingRegressor,
    RandomForestRegressor,
)
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import (
    LinearRegression,
    PassiveAggressiveRegressor,
    RANSACRegressor,
    SGDRegressor,
)
from sklearn.svm import LinearSVR
from sklearn.tree import DecisionTreeRegressor

from .errors import DegenerateData, DimensionMismatch, InvalidParam, ValidationError

INF = math.inf


@dataclass(frozen=True)
class ParamSpec:
    type: str  # "int" | "float" | "cat"
    default: Any
    valid: Tuple[float, float] = (-INF, INF)
    search: Optional[Tuple[float, float]] = None
    log: bool = False
    choices: Tuple = ()
    nullable: bool = False

    def check(self, name: str, value):
        if value is None:
            if self.nullable:
                return None
            raise InvalidParam(name, "may not be None")
        if self.type == "cat":
            if value not in self.choices:
                raise InvalidParam(name, f"{value!r} not in {self.choices}")
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise InvalidParam(name, f"expected a number, got {value!r}")
        if self.type == "int":
            if float(value) != int(value):
                raise InvalidParam(name, f"expected an integer, got {value!r}")
            value = int(value)
        else:
            value = float(value)
        lo, hi = self.valid
        if not (lo <= value <= hi) or (isinstance(value, float) and not math.isfinite(value)):
            raise InvalidParam(name, f"{value!r} outside valid range [{lo}, {hi}]")
        return value


_TREES = dict(type="int", default=100, valid=(1, 10_000), search=(10, 100))
_DEPTH = dict(type="int", default=None, valid=(1, 1_000), search=(2, 10), nullable=True)
_LEAF = dict(type="int", default=1, valid=(1, 10_000), search=(1, 20))
_LR = dict(type="float", default=0.1, valid=(1e-6, 10.0), search=(0.01, 1.0), log=True)

# Defaults mirror scikit-learn's constructor defaults; `search` ranges are
# what the committee optimizer samples from.
SCHEMAS: Dict[str, Dict[str, ParamSpec]] = {
    "ols": {
        "fit_intercept": ParamSpec("cat", True, choices=(True, False)),
    },
    "sgd_linear": {
        "alpha": ParamSpec("float", 1e-4, (0.0, 10.0), (1e-6, 1e-1), log=True),
        "learning_rate": ParamSpec("cat", "invscaling",
                                   choices=("constant", "invscaling", "adaptive")),
        "eta0": ParamSpec("float", 0.01, (1e-8, 10.0), (1e-4, 1e-1), log=True),
        "max_iter": ParamSpec("int", 1000, (1, 100_000), (100, 2000)),
    },
    "passive_aggressive": {
        "C": ParamSpec("float", 1.0, (1e-8, 1e4), (1e-3, 10.0), log=True),
        "epsilon": ParamSpec("float", 0.1, (0.0, 10.0), (0.001, 0.5)),
        "max_iter": ParamSpec("int", 1000, (1, 100_000), (100, 2000)),
    },
    "ransac": {
        "min_samples": ParamSpec("float", None, (1e-6, 1.0), (0.1, 1.0), nullable=True),
        "threshold_scale": ParamSpec("float", 1.0, (1e-6, 1e6), (0.5, 5.0)),
        "max_trials": ParamSpec("int", 100, (1, 100_000), (20, 200)),
    },
    "decision_tree": {
        "max_depth": ParamSpec(**_DEPTH),
        "min_samples_leaf": ParamSpec(**_LEAF),
    },
    "random_forest": {
        "n_trees": ParamSpec(**_TREES),
        "max_depth": ParamSpec(**_DEPTH),
        "min_samples_leaf": ParamSpec(**_LEAF),
    },
    "bagging": {
        "n_trees": ParamSpec(**{**_TREES, "default": 10}),
        "max_samples": ParamSpec("float", 1.0, (1e-6, 1.0), (0.3, 1.0)),
    },
    "adaboost": {
        "n_trees": ParamSpec(**{**_TREES, "default": 50}),
        "learning_rate": ParamSpec(**{**_LR, "default": 1.0}),
        "max_depth": ParamSpec("int", 3, (1, 1_000), (1, 10)),
    },
    "gradient_boosting": {
        "n_trees": ParamSpec(**_TREES),
        "learning_rate": ParamSpec(**_LR),
        "max_depth": ParamSpec("int", 3, (1, 1_000), (2, 10)),
        "subsample": ParamSpec("float", 1.0, (1e-6, 1.0), (0.5, 1.0)),
    },
    "svr_linear": {
        "C": ParamSpec("float", 1.0, (1e-8, 1e4), (1e-3, 10.0), log=True),
        "epsilon": ParamSpec("float", 0.0, (0.0, 10.0), (0.0, 0.2)),
        "max_iter": ParamSpec("int", 1000, (1, 1_000_000), (100, 5000)),
    },
}

KINDS = tuple(SCHEMAS)


@dataclass
class RegressorSpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise InvalidParam("kind", f"{self.kind!r} not in {KINDS}")
        schema = SCHEMAS[self.kind]
        for name in self.params:
            if name not in schema:
                raise InvalidParam(name, f"not a parameter of {self.kind}")
        full = {}
        for name, ps in schema.items():
            full[name] = ps.check(name, self.params.get(name, ps.default))
        self.params = full
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise InvalidParam("seed", "must be an integer")
        self.seed = int(self.seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, data: dict) -> "RegressorSpec":
        return cls(data["kind"], dict(data.get("params", {})), int(data.get("seed", 0)))


def default_spec(kind: str, seed: int = 0) -> RegressorSpec:
    return RegressorSpec(kind, {}, seed)


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1:
        raise DimensionMismatch("X must be 2-D and y 1-D")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    if X.shape[0] < 2:
        raise ValidationError("need at least 2 rows to fit")
    if X.shape[1] < 1:
        raise ValidationError("need at least 1 feature")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("X and y must be finite")
    return X, y


def _make_estimator(spec: RegressorSpec, X: np.ndarray, y: np.ndarray):
    p, seed = spec.params, spec.seed
    d = X.shape[1]
    if spec.kind == "ols":
        return LinearRegression(fit_intercept=p["fit_intercept"])
    if spec.kind == "sgd_linear":
        return SGDRegressor(loss="squared_error", alpha=p["alpha"],
                            learning_rate=p["learning_rate"], eta0=p["eta0"],
                            max_iter=p["max_iter"], random_state=seed)
    if spec.kind == "passive_aggressive":
        return PassiveAggressiveRegressor(C=p["C"], epsilon=p["epsilon"],
                                          max_iter=p["max_iter"], random_state=seed)
    if spec.kind == "ransac":
        if np.ptp(y) == 0:
            raise DegenerateData("ransac needs a target with non-zero variance")
        pre = LinearRegression().fit(X, y)
        scale = float(np.median(np.abs(y - pre.predict(X))))
        floor = 1e-12 * (1.0 + float(np.max(np.abs(y))))
        threshold = max(p["threshold_scale"] * scale, floor)
        min_samples = p["min_samples"]
        if min_samples is not None:
            # never ask for fewer points than the base OLS needs
            min_samples = max(int(math.ceil(min_samples * X.shape[0])), min(d + 1, X.shape[0]))
        return RANSACRegressor(estimator=LinearRegression(), min_samples=min_samples,
                               residual_threshold=threshold, max_trials=p["max_trials"],
                               random_state=seed)
    if spec.kind == "decision_tree":
        return DecisionTreeRegressor(max_depth=p["max_depth"],
                                     min_samples_leaf=p["min_samples_leaf"], random_state=seed)
    if spec.kind == "random_forest":
        return RandomForestRegressor(n_estimators=p["n_trees"], max_depth=p["max_depth"],
                                     min_samples_leaf=p["min_samples_leaf"],
                                     max_features=int(math.ceil(d / 3)), bootstrap=True,
                                     random_state=seed, n_jobs=1)
    if spec.kind == "bagging":
        return BaggingRegressor(estimator=DecisionTreeRegressor(), n_estimators=p["n_trees"],
                                max_samples=p["max_samples"], bootstrap=True,
                                random_state=seed, n_jobs=1)
    if spec.kind == "adaboost":
        return AdaBoostRegressor(estimator=DecisionTreeRegressor(max_depth=p["max_depth"]),
                                 n_estimators=p["n_trees"], learning_rate=p["learning_rate"],
                                 loss="linear", random_state=seed)
    if spec.kind == "gradient_boosting":
        return GradientBoostingRegressor(loss="squared_error", n_estimators=p["n_trees"],
                                         learning_rate=p["learning_rate"],
                                         max_depth=p["max_depth"], subsample=p["subsample"],
                                         random_state=seed)
    if spec.kind == "svr_linear":
        return LinearSVR(C=p["C"], epsilon=p["epsilon"], max_iter=p["max_iter"],
                         loss="epsilon_insensitive", dual=True, random_state=seed)
    raise InvalidParam("kind", spec.kind)  # pragma: no cover


# ---------------------------------------------------------------------------
# portable fitted state


def _tree_state(tree) -> dict:
    t = tree.tree_
    return {
        "left": t.children_left.tolist(),
        "right": t.children_right.tolist(),
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "value": t.value[:, 0, 0].tolist(),
    }


def _tree_predict(state: dict, X: np.ndarray) -> np.ndarray:
    left = np.asarray(state["left"])
    right = np.asarray(state["right"])
    feature = np.asarray(state["feature"])
    threshold = np.asarray(state["threshold"], dtype=float)
    value = np.asarray(state["value"], dtype=float)
    # scikit-learn compares float32-cast inputs against float64 thresholds
    Xf = X.astype(np.float32).astype(np.float64)
    rows = np.arange(X.shape[0])
    node = np.zeros(X.shape[0], dtype=int)
    active = left[node] != -1
    while active.any():
        r, nd = rows[active], node[active]
        go_left = Xf[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = left[node] != -1
    return value[node]


def export_state(kind: str, est) -> dict:
    if kind in ("ols", "sgd_linear", "passive_aggressive", "svr_linear", "ransac"):
        lin = est.estimator_ if kind == "ransac" else est
        coef = np.ravel(lin.coef_).tolist()
        intercept = float(np.ravel(np.atleast_1d(lin.intercept_))[0])
        return {"type": "linear", "coef": coef, "intercept": intercept}
    if kind == "decision_tree":
        return {"type": "tree", "tree": _tree_state(est)}
    if kind == "random_forest":
        return {"type": "mean", "trees": [_tree_state(t) for t in est.estimators_],
                "features": None}
    if kind == "bagging":
        return {"type": "mean", "trees": [_tree_state(t) for t in est.estimators_],
                "features": [np.asarray(f).tolist() for f in est.estimators_features_]}
    if kind == "adaboost":
        n = len(est.estimators_)
        return {"type": "weighted_median", "trees": [_tree_state(t) for t in est.estimators_],
                "weights": est.estimator_weights_[:n].tolist()}
    if kind == "gradient_boosting":
        return {"type": "boosted", "init": float(np.ravel(est.init_.constant_)[0]),
                "learning_rate": float(est.learning_rate),
                "trees": [_tree_state(t) for t in est.estimators_[:, 0]]}
    raise InvalidParam("kind", kind)  # pragma: no cover


def predict_state(state: dict, X: np.ndarray) -> np.ndarray:
    kind = state["type"]
    if kind == "linear":
        return X @ np.asarray(state["coef"], dtype=float) + state["intercept"]
    if kind == "tree":
        return _tree_predict(state["tree"], X)
    if kind == "mean":
        feats = state["features"]
        out = np.zeros(X.shape[0])
        for i, tree in enumerate(state["trees"]):
            Xi = X if feats is None else X[:, feats[i]]
            out += _tree_predict(tree, Xi)
        return out / len(state["trees"])
    if kind == "weighted_median":
        preds = np.column_stack([_tree_predict(t, X) for t in state["trees"]])
        weights = np.asarray(state["weights"], dtype=float)
        order = np.argsort(preds, axis=1)
        cdf = np.cumsum(weights[order], axis=1)
        above = cdf >= 0.5 * cdf[:, -1][:, None]
        pick = order[np.arange(X.shape[0]), np.argmax(above, axis=1)]
        return preds[np.arange(X.shape[0]), pick]
    if kind == "boosted":
        out = np.full(X.shape[0], state["init"])
        for tree in state["trees"]:
            out += state["learning_rate"] * _tree_predict(tree, X)
        return out
    raise ValidationError(f"unknown state type {kind!r}")


@dataclass
class FittedRegressor:
    spec: RegressorSpec
    n_features: int
    train_score: float
    estimator: Any = field(default=None, repr=False)
    _state: Optional[dict] = field(default=None, repr=False)

    @property
    def state(self) -> dict:
        if self._state is None:
            self._state = export_state(self.spec.kind, self.estimator)
        return self._state

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "n_features": self.n_features,
                "train_score": self.train_score, "state": self.state}

    @classmethod
    def from_dict(cls, data: dict) -> "FittedRegressor":
        return cls(RegressorSpec.from_dict(data["spec"]), int(data["n_features"]),
                   float(data["train_score"]), None, data["state"])


def fit(spec: RegressorSpec, X, y, score: bool = True) -> FittedRegressor:
    """Fit one committee member; deterministic given (spec, X, y).

    ``train_score`` (training MAE) is left as NaN when ``score`` is false.
    """
    X, y = _check_xy(X, y)
    est = _make_estimator(spec, X, y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        warnings.simplefilter("ignore", FutureWarning)
        warnings.simplefilter("ignore", UserWarning)
        try:
            est.fit(X, y)
        except ValueError as exc:
            if spec.kind == "ransac":
                raise DegenerateData(f"ransac found no consensus set: {exc}") from exc
            raise
    model = FittedRegressor(spec, X.shape[1], math.nan, est)
    if score:
        model.train_score = float(np.mean(np.abs(predict(model, X) - y)))
    return model


def predict(model: FittedRegressor, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if model.n_features == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"model expects {model.n_features} features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.empty(0)
    if model.estimator is not None:
        out = np.asarray(model.estimator.predict(X), dtype=float).ravel()
    else:
        out = predict_state(model.state, X)
    return out


def staged_train_errors(model: FittedRegressor, X, y) -> np.ndarray:
    """Training error after each boosting round (MSE for gradient boosting, MAE for AdaBoost)."""
    X, y = _check_xy(X, y)
    est = model.estimator
    if model.spec.kind == "gradient_boosting":
        return np.array([np.mean((p - y) ** 2) for p in est.staged_predict(X)])
    if model.spec.kind == "adaboost":
        return np.array([np.mean(np.abs(p - y)) for p in est.staged_predict(X)])
    raise ValidationError("staged errors only exist for boosting kinds")


def search_space(kinds: Sequence[str]):
    """Gene declarations for the committee optimizer (see :mod:`pvcast.evolution`)."""
    from .evolution import Categorical, Integer, Real

    genes = {}
    for kind in kinds:
        if kind not in SCHEMAS:
            raise InvalidParam("kind", kind)
        genes[f"{kind}:use"] = Categorical((True, False))
        for name, ps in SCHEMAS[kind].items():
            key = f"{kind}:{name}"
            if ps.type == "cat":
                genes[key] = Categorical(ps.choices)
            elif ps.type == "int":
                genes[key] = Integer(int(ps.search[0]), int(ps.search[1]), allow_none=ps.nullable)
            else:
                genes[key] = Real(float(ps.search[0]), float(ps.search[1]), log=ps.log,
                                 allow_none=ps.nullable)
    return genes
