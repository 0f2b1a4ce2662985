import json
import math

import numpy as np
import pytest

from pvcast import regressors as R
from pvcast.errors import DegenerateData, DimensionMismatch, InvalidParam
from pvcast.evolution import validate_genome


def line(n=10):
    x = np.arange(n, dtype=float)[:, None]
    return x, 2.0 * x[:, 0] + 1.0


def wavy(rng, n=120, d=4):
    X = rng.uniform(0, 6, (n, d))
    return X, np.sin(X[:, 0]) + 0.3 * X[:, 1] - 0.2 * X[:, 2] + 0.05 * rng.normal(size=n)


def test_ols_recovers_line():
    X, y = line()
    m = R.fit(R.RegressorSpec("ols"), X, y)
    assert m.estimator.coef_[0] == pytest.approx(2.0, abs=1e-9)
    assert m.estimator.intercept_ == pytest.approx(1.0, abs=1e-9)
    assert R.predict(m, [[10.0]])[0] == pytest.approx(21.0, abs=1e-9)


def test_ols_residuals_orthogonal_to_design(rng):
    X, y = wavy(rng)
    m = R.fit(R.RegressorSpec("ols"), X, y)
    A = np.column_stack([np.ones(len(y)), X])
    assert np.max(np.abs(A.T @ (y - R.predict(m, X)))) < 1e-8


def test_ols_matches_lstsq(rng):
    X, y = wavy(rng)
    A = np.column_stack([np.ones(len(y)), X])
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    m = R.fit(R.RegressorSpec("ols"), X, y)
    np.testing.assert_allclose(R.predict(m, X), A @ coef, atol=1e-10)


def test_invalid_depth():
    with pytest.raises(InvalidParam) as exc:
        R.RegressorSpec("decision_tree", {"max_depth": 0})
    assert exc.value.name == "max_depth"


def test_unknown_param_and_kind():
    with pytest.raises(InvalidParam):
        R.RegressorSpec("ols", {"alpha": 1.0})
    with pytest.raises(InvalidParam):
        R.RegressorSpec("kernel_ridge")


def test_random_forest_sine_training_error():
    x = np.linspace(0, 2 * np.pi, 200)[:, None]
    m = R.fit(R.RegressorSpec("random_forest", {"n_trees": 50}, seed=7), x, np.sin(x[:, 0]))
    assert m.train_score < 0.1
    assert m.train_score == pytest.approx(0.00395, abs=5e-5)  # pinned observation


def test_random_forest_feature_sampling(rng):
    X, y = wavy(rng, d=7)
    m = R.fit(R.default_spec("random_forest"), X, y)
    assert m.estimator.max_features == math.ceil(7 / 3)


def test_zero_rows_and_dimension_mismatch():
    X, y = line()
    m = R.fit(R.RegressorSpec("decision_tree"), X, y)
    assert R.predict(m, np.empty((0, 1))).shape == (0,)
    with pytest.raises(DimensionMismatch):
        R.predict(m, np.ones((3, 2)))


@pytest.mark.parametrize("kind", R.KINDS)
def test_fit_is_deterministic(kind, rng):
    X, y = wavy(rng)
    a = R.predict(R.fit(R.default_spec(kind, 3), X, y), X)
    b = R.predict(R.fit(R.default_spec(kind, 3), X, y), X)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", R.KINDS)
def test_portable_state_matches_library_predictions(kind, rng):
    X, y = wavy(rng)
    m = R.fit(R.default_spec(kind, 5), X, y)
    restored = R.FittedRegressor.from_dict(json.loads(json.dumps(m.to_dict())))
    Xt = rng.uniform(-1, 7, (50, X.shape[1]))
    np.testing.assert_allclose(R.predict(restored, Xt), m.estimator.predict(Xt),
                               rtol=1e-10, atol=1e-12)


def test_ransac_resists_outliers(rng):
    x = np.sort(rng.uniform(0, 10, 100))
    y = 2.0 * x + 1.0 + 0.05 * rng.normal(size=100)
    bad = np.arange(100) >= 70  # the 30 largest x: gross outliers with leverage
    y[bad] -= 40.0
    X = x[:, None]
    ols = R.fit(R.RegressorSpec("ols"), X, y).estimator.coef_[0]
    ransac = R.fit(R.default_spec("ransac", 1), X, y).estimator.estimator_.coef_[0]
    assert abs(ransac - 2.0) / 2.0 < 0.05
    assert abs(ols - 2.0) / 2.0 > 0.20


def test_ransac_constant_target():
    X, _ = line()
    with pytest.raises(DegenerateData):
        R.fit(R.default_spec("ransac"), X, np.ones(10))


def test_gradient_boosting_training_error_non_increasing(rng):
    X, y = wavy(rng)
    m = R.fit(R.default_spec("gradient_boosting", 7), X, y)
    err = R.staged_train_errors(m, X, y)
    assert np.all(np.diff(err) <= 1e-12)


def test_adaboost_training_error_improves_overall(rng):
    # weighted-median aggregation does not guarantee per-round monotonicity
    X, y = wavy(rng)
    m = R.fit(R.default_spec("adaboost", 7), X, y)
    err = R.staged_train_errors(m, X, y)
    assert err[-1] < err[0]


def test_svr_linear_fits_a_line():
    X, y = line(50)
    m = R.fit(R.RegressorSpec("svr_linear", {"C": 10.0, "max_iter": 100000}), X / 50, y)
    assert m.train_score < 0.5


def test_default_genome_fits_search_space():
    from pvcast.ensemble import default_committee, genome_from_committee
    space = R.search_space(R.KINDS)
    validate_genome(space, genome_from_committee(default_committee(), R.KINDS))
