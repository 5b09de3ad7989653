import numpy as np
import pandas as pd
import pytest

from pymicg import setup
from pymicg.exceptions import PreconditionError, RankDeficiencyError, ValidationError
from pymicg.regress import (
    design_from_columns,
    fits_to_csv,
    ols_fit,
    pinball_loss,
    quantile_fit,
    quantile_fits,
)
from pymicg.tracing import reset_logger


@pytest.fixture(autouse=True)
def reset_setup():
    setup.Setup.reset()
    reset_logger()
    setup.Setup.enable_testing_mode()
    yield
    setup.Setup.disable_testing_mode()
    reset_logger()


def _with_intercept(x):
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(len(x)), x])


def test_ols_three_points():
    fit = ols_fit([1, 2, 4], _with_intercept([0, 1, 2]), terms=("intercept", "x"))
    assert fit["x"] == pytest.approx(1.5, abs=1e-12)
    assert fit["intercept"] == pytest.approx(5 / 6, abs=1e-12)
    assert fit.residual_variance == pytest.approx(1 / 6, abs=1e-12)


def test_ols_residuals_orthogonal_and_standard_errors():
    rng = np.random.default_rng(12)
    X = _with_intercept(rng.normal(size=80))
    X = np.column_stack([X, rng.random(80)])
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.normal(0, 0.3, 80)
    fit = ols_fit(y, X)
    resid = y - fit.predict(X)
    scale = np.abs(X).sum(axis=0) * np.abs(resid).max()
    assert np.all(np.abs(X.T @ resid) <= 1e-9 * scale)
    expected_se = np.sqrt(fit.residual_variance * np.diag(np.linalg.inv(X.T @ X)))
    assert np.allclose(fit.se, expected_se, rtol=1e-9)
    assert fit.terms == ("x0", "x1", "x2")


def test_ols_errors():
    X = _with_intercept([1, 2, 3, 4])
    with pytest.raises(RankDeficiencyError):
        ols_fit([1, 2, 3, 4], np.column_stack([X, 2 * X[:, 1]]))
    with pytest.raises(PreconditionError):
        ols_fit([1, 2], _with_intercept([1, 2]))
    with pytest.raises(ValidationError):
        ols_fit([1, 2, 3], X)
    with pytest.raises(ValidationError):
        ols_fit([1, 2, np.nan, 4], X)
    with pytest.raises(ValidationError):
        ols_fit([1, 2, 3, 4], X, terms=("only_one",))


def test_pinball_loss():
    assert pinball_loss([1.0, -2.0], 0.25) == pytest.approx(1.75)
    assert pinball_loss([0.0, 0.0], 0.9) == 0.0


def test_median_of_three():
    fit = quantile_fit([1, 2, 100], np.ones((3, 1)), 0.5, terms=("intercept",))
    assert fit["intercept"] == pytest.approx(2.0, abs=1e-9)
    assert fit.tau == 0.5
    assert fit.objective == pytest.approx(0.5 * 1 + 0.5 * 98)


@pytest.mark.parametrize("tau", [0.1, 0.15, 0.5])
def test_intercept_only_matches_order_statistic_oracle(tau):
    y = np.arange(1.0, 11.0)
    fit = quantile_fit(y, np.ones((10, 1)), tau)
    best = min(pinball_loss(y - candidate, tau) for candidate in y)
    assert fit.objective == pytest.approx(best, abs=1e-9)
    assert np.min(np.abs(y - fit.coefficients[0])) < 1e-9


def test_median_regression_close_to_ols_under_symmetric_noise():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1, 1, 120)
        X = _with_intercept(x)
        y = 0.5 + 1.2 * x + rng.normal(0, 0.5, 120)
        ols = ols_fit(y, X)
        median = quantile_fit(y, X, 0.5)
        assert abs(median.coefficients[1] - ols.coefficients[1]) < 2 * ols.se[1]


def _noisy_line(seed, n=150):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    return 0.5 + 1.2 * x + rng.standard_t(4, n) * 0.4, _with_intercept(x)


@pytest.mark.parametrize("tau", [0.1, 0.15, 0.5])
def test_quantile_fit_residual_signs_bracket_tau(tau):
    for seed in range(10):
        y, X = _noisy_line(seed)
        resid = y - quantile_fit(y, X, tau).predict(X)
        below = np.count_nonzero(resid < -1e-6)
        at_or_below = np.count_nonzero(resid <= 1e-6)
        assert below <= tau * len(y) <= at_or_below


@pytest.mark.parametrize("tau", [0.1, 0.15, 0.5])
def test_quantile_fit_shift_moves_only_intercept(tau):
    y, X = _noisy_line(21)
    base = quantile_fit(y, X, tau)
    shifted = quantile_fit(y + 3.0, X, tau)
    assert shifted.coefficients[0] == pytest.approx(base.coefficients[0] + 3.0, abs=1e-6)
    assert shifted.coefficients[1] == pytest.approx(base.coefficients[1], abs=1e-6)


@pytest.mark.parametrize("tau", [0.1, 0.15, 0.5])
def test_quantile_fit_beats_ols_on_pinball_loss(tau):
    for seed in range(10):
        y, X = _noisy_line(seed)
        fit = quantile_fit(y, X, tau)
        ols = ols_fit(y, X)
        assert fit.objective <= pinball_loss(y - ols.predict(X), tau) + 1e-7


def test_quantile_fit_errors():
    X = _with_intercept([1, 2, 3, 4])
    for tau in (0.0, 1.0):
        with pytest.raises(ValidationError):
            quantile_fit([1, 2, 3, 4], X, tau)
    with pytest.raises(RankDeficiencyError):
        quantile_fit([1, 2, 3, 4], np.column_stack([X, X[:, 0]]), 0.5)


def test_fits_to_csv_stacks_ols_and_quantiles():
    X = _with_intercept([0, 1, 2, 3, 4])
    y = [1.0, 2.0, 2.5, 4.0, 5.5]
    fits = [ols_fit(y, X, ("intercept", "x"))] + quantile_fits(y, X, [0.25, 0.75], ("intercept", "x"))
    lines = fits_to_csv(fits).splitlines()
    assert lines[0] == "term,estimate,se,tau"
    assert len(lines) == 7
    assert lines[1].startswith("intercept,") and lines[1].endswith(",")
    assert lines[3].endswith(",0.25")
    assert lines[3].split(",")[2] == ""


def test_design_from_columns():
    frame = pd.DataFrame({
        "A": [0.4, 0.6, np.nan, 0.8, 0.5],
        "age": [8, 9, 10, 11, 12],
        "area": ["urban", "rural", "rural", "urban", "rural"],
    })
    y, X, names = design_from_columns(frame, "A", ["age", "area"])
    assert names == ("intercept", "age", "area[urban]")
    assert y.tolist() == [0.4, 0.6, 0.8, 0.5]
    assert X.tolist() == [[1, 8, 1], [1, 9, 0], [1, 11, 1], [1, 12, 0]]
    _, X_plain, plain_names = design_from_columns(frame, "A", ["age"], intercept=False)
    assert plain_names == ("age",)
    with pytest.raises(ValidationError):
        design_from_columns(frame, "A", ["height"])
    with pytest.raises(ValidationError):
        design_from_columns(frame, "area", ["age"])
