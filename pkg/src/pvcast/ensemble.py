"""Mean-vote regression committees and their genetic optimization."""
from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import regressors
from .errors import DimensionMismatch, PvcastError, TooFewRows, ValidationError
from .evolution import GaConfig, GaResult, run_ga
from .regressors import FittedRegressor, RegressorSpec

logger = logging.getLogger(__name__)


@dataclass
class Committee:
    members: List[RegressorSpec]

    def __post_init__(self):
        self.members = list(self.members)
        if not self.members:
            raise ValidationError("a committee needs at least one member")
        kinds = [m.kind for m in self.members]
        if len(set(kinds)) != len(kinds):
            raise ValidationError(f"each regressor kind may appear once, got {kinds}")

    @property
    def kinds(self) -> List[str]:
        return [m.kind for m in self.members]

    def to_dict(self) -> dict:
        return {"members": [m.to_dict() for m in self.members]}


@dataclass
class FittedCommittee:
    committee: Committee
    fitted: List[FittedRegressor]

    def __post_init__(self):
        if len(self.fitted) != len(self.committee.members):
            raise ValidationError("fitted member count differs from committee size")

    @property
    def n_features(self) -> int:
        return self.fitted[0].n_features

    def to_dict(self) -> dict:
        return {"committee": self.committee.to_dict(),
                "fitted": [f.to_dict() for f in self.fitted]}

    @classmethod
    def from_dict(cls, data: dict) -> "FittedCommittee":
        fitted = [FittedRegressor.from_dict(f) for f in data["fitted"]]
        return cls(Committee([f.spec for f in fitted]), fitted)


def default_committee(kinds: Sequence[str] = regressors.KINDS, seed: int = 0) -> Committee:
    return Committee([regressors.default_spec(k, seed) for k in kinds])


def _annotate(exc: Exception, kind: str) -> Exception:
    exc.member_kind = kind
    exc.args = (f"[{kind}] {exc}",)
    return exc


def fit_committee(committee: Committee, X, y) -> FittedCommittee:
    """Fit every member independently on the same data."""
    fitted = []
    for spec in committee.members:
        try:
            fitted.append(regressors.fit(spec, X, y))
        except PvcastError as exc:
            raise _annotate(exc, spec.kind)
    return FittedCommittee(committee, fitted)


def member_predictions(model: FittedCommittee, X) -> np.ndarray:
    """(n_rows, n_members) matrix of member predictions."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(f"committee expects {model.n_features} features, got {X.shape}")
    if X.shape[0] == 0:
        return np.empty((0, len(model.fitted)))
    return np.column_stack([regressors.predict(m, X) for m in model.fitted])


def vote_predict(model: FittedCommittee, X) -> np.ndarray:
    """Arithmetic mean of the member predictions, per row."""
    P = member_predictions(model, X)
    if P.shape[0] == 0:
        return np.empty(0)
    return P.mean(axis=1)


def kfold_indices(n: int, folds: int, seed: int) -> List[np.ndarray]:
    if folds < 2:
        raise ValidationError("need at least 2 folds")
    if n < folds:
        raise TooFewRows(f"{n} rows cannot be split into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class CrossValidator:
    """Out-of-fold predictions per member, cached by member configuration.

    A committee's fold error only depends on the mean of its members'
    held-out predictions, so members shared between genomes are fitted once.
    """

    def __init__(self, X, y, folds: int = 5, seed: int = 0):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch("X and y row counts differ")
        self.splits = kfold_indices(len(self.y), folds, seed)
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def out_of_fold(self, spec: RegressorSpec) -> np.ndarray:
        key = json.dumps(spec.to_dict(), sort_keys=True)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        oof = np.empty_like(self.y)
        n = len(self.y)
        for test in self.splits:
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            try:
                model = regressors.fit(spec, self.X[train], self.y[train], score=False)
            except PvcastError as exc:
                raise _annotate(exc, spec.kind)
            oof[test] = regressors.predict(model, self.X[test])
        with self._lock:
            self._cache[key] = oof
        return oof

    def scores(self, committee: Committee) -> Dict[str, float]:
        votes = np.mean([self.out_of_fold(m) for m in committee.members], axis=0)
        err = votes - self.y
        mae = float(np.mean([np.mean(np.abs(err[t])) for t in self.splits]))
        mse = float(np.mean([np.mean(err[t] ** 2) for t in self.splits]))
        return {"mae": mae, "mse": mse}


def evaluate_committee(committee: Committee, X, y, folds: int = 5, seed: int = 0) -> float:
    """Cross-validated MAE: mean over folds of the held-out mean absolute error."""
    y = np.asarray(y, dtype=float)
    if len(y) < folds:
        raise TooFewRows(f"{len(y)} rows cannot be split into {folds} folds")
    return CrossValidator(X, y, folds, seed).scores(committee)["mae"]


def committee_from_genome(genome: Dict, kinds: Sequence[str], seed: int) -> Optional[Committee]:
    members = []
    for kind in kinds:
        if not genome[f"{kind}:use"]:
            continue
        params = {name: genome[f"{kind}:{name}"] for name in regressors.SCHEMAS[kind]}
        members.append(RegressorSpec(kind, params, seed))
    return Committee(members) if members else None


def genome_from_committee(committee: Committee, kinds: Sequence[str]) -> Dict:
    by_kind = {m.kind: m for m in committee.members}
    genome = {}
    for kind in kinds:
        spec = by_kind.get(kind, regressors.default_spec(kind))
        genome[f"{kind}:use"] = kind in by_kind
        for name in regressors.SCHEMAS[kind]:
            genome[f"{kind}:{name}"] = spec.params[name]
    return genome


@dataclass
class OptimizationResult:
    fitted: FittedCommittee
    committee: Committee
    history: List[float]
    optimized: Dict[str, float]
    default: Dict[str, float]
    ga: GaResult = field(repr=False)

    @property
    def mae_reduction_pct(self) -> float:
        return _reduction(self.default["mae"], self.optimized["mae"])

    @property
    def mse_reduction_pct(self) -> float:
        return _reduction(self.default["mse"], self.optimized["mse"])

    def report(self) -> dict:
        return {
            "default_mae": self.default["mae"],
            "default_mse": self.default["mse"],
            "optimized_mae": self.optimized["mae"],
            "optimized_mse": self.optimized["mse"],
            "mae_reduction_pct": self.mae_reduction_pct,
            "mse_reduction_pct": self.mse_reduction_pct,
            "members": self.committee.kinds,
            "history": self.history,
        }


def _reduction(before: float, after: float) -> float:
    if before == 0:
        return 0.0
    return 100.0 * (before - after) / before


def optimize_committee(pool: Sequence[str], X, y, config: GaConfig, folds: int = 5,
                       checkpoint_dir=None, threads: int = 1) -> OptimizationResult:
    """Search committee membership and member hyperparameters by genetic search.

    The genome holds one inclusion flag per kind plus that kind's parameters.
    The library-default full committee seeds the first population, so the
    result never scores worse than the default configuration.
    """
    pool = list(dict.fromkeys(pool))
    if not pool:
        raise ValidationError("regressor pool is empty")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    cv = CrossValidator(X, y, folds, config.seed)
    space = regressors.search_space(pool)
    seed = config.seed

    def fitness(genome):
        committee = committee_from_genome(genome, pool, seed)
        if committee is None:
            return math.inf
        return cv.scores(committee)["mae"]

    baseline = default_committee(pool, seed)
    ga = run_ga(space, fitness, config, initial=[genome_from_committee(baseline, pool)],
                checkpoint_dir=checkpoint_dir, threads=threads)
    best = committee_from_genome(ga.best_genome, pool, seed)
    fitted = fit_committee(best, X, y)
    return OptimizationResult(fitted, best, ga.history, cv.scores(best),
                              cv.scores(baseline), ga)
