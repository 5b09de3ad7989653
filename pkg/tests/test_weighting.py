import json
import math

import numpy as np
import pandas as pd
import pytest

from pymicg import setup
from pymicg.data_model import DeprivationMatrix, code_deprivations, parse_catalog, reference_catalog
from pymicg.exceptions import (
    ConvergenceError,
    DegenerateDataError,
    PreconditionError,
    WeightError,
)
from pymicg.index import deprivation_scores
from pymicg.stats import spearman
from pymicg.synth import GeneratorSpec, generate
from pymicg.tracing import reset_logger
from pymicg.weighting import (
    WeightVector,
    custom_weights,
    dominant_eigenpair,
    equal_nested_weights,
    fix_sign,
    pca_weights,
    read_dimension_weights,
)


@pytest.fixture(autouse=True)
def reset_setup():
    setup.Setup.reset()
    reset_logger()
    setup.Setup.enable_testing_mode()
    yield
    setup.Setup.disable_testing_mode()
    reset_logger()


def _matrix(columns, ids=None):
    frame = pd.DataFrame(columns, dtype=float)
    frame.index = pd.Index(ids or [f"c{i}" for i in range(len(frame))], name="child_id")
    return DeprivationMatrix(frame)


def test_equal_nested_weights_on_reference_catalog():
    catalog = reference_catalog()
    weights = equal_nested_weights(catalog)
    assert weights.provenance == "equal"
    assert weights.ids == catalog.indicator_ids
    for indicator in catalog.dimension("Life and physical health").indicators:
        assert abs(weights[indicator.id] - 1 / 98) < 1e-12
    assert abs(weights["time_to_school"] - 1 / 14) < 1e-12
    for value in weights.dimension_weights(catalog).values():
        assert abs(value - 1 / 14) < 1e-12
    assert abs(math.fsum(weights.entries.values()) - 1) < 1e-12


def test_equal_weights_two_single_indicator_dimensions():
    catalog = parse_catalog(json.dumps({"dimensions": [
        {"name": "A", "indicators": [{"id": "a", "rule": "x > 0"}]},
        {"name": "B", "indicators": [{"id": "b", "rule": "y > 0"}]},
    ]}))
    assert equal_nested_weights(catalog).as_array().tolist() == [0.5, 0.5]


def test_custom_weights_all_ones_match_equal():
    catalog = reference_catalog()
    ones = {name: 1 for name in catalog.dimension_names}
    custom = custom_weights(ones, catalog)
    equal = equal_nested_weights(catalog)
    assert custom.provenance == "custom"
    assert np.allclose(custom.as_array(), equal.as_array(), rtol=0, atol=1e-15)


def test_custom_weights_priorities_and_zero():
    catalog = reference_catalog()
    prefs = {name: 1.0 for name in catalog.dimension_names}
    prefs["Education"] = 2.0
    prefs["Mobility"] = 0.0
    weights = custom_weights(prefs, catalog)
    dims = weights.dimension_weights(catalog)
    assert dims["Education"] == pytest.approx(2 * dims["Love and care"])
    assert weights["time_to_school"] == 0.0
    assert dims["Education"] == pytest.approx(2 / 14)


@pytest.mark.parametrize("prefs", [
    {"Nowhere": 1.0},
    {"Health": -1.0, "Time": 1.0},
    {"Health": 0.0, "Time": 0.0},
    {"Health": 1.0},
])
def test_custom_weights_errors(prefs):
    catalog = parse_catalog(json.dumps({"dimensions": [
        {"name": "Health", "indicators": [{"id": "a", "rule": "x > 0"}]},
        {"name": "Time", "indicators": [{"id": "b", "rule": "y > 0"}]},
    ]}))
    with pytest.raises(WeightError):
        custom_weights(prefs, catalog)


def test_weight_vector_invariants():
    with pytest.raises(WeightError):
        WeightVector({"a": 0.6, "b": 0.6}, "custom")
    with pytest.raises(WeightError):
        WeightVector({"a": 1.5, "b": -0.5}, "custom")
    with pytest.raises(WeightError):
        WeightVector({"a": 1.0}, "handmade")


def test_weight_vector_json_and_csv():
    weights = WeightVector({"a": 0.25, "b": 0.75}, "pca", ("c",), loadings={"a": 0.3, "b": 0.9}, eigenvalue=1.8)
    again = WeightVector.from_json(weights.to_json())
    assert again == weights
    assert again.eigenvalue == 1.8
    assert weights.to_csv() == "indicator,weight\na,0.25\nb,0.75\nc,\n"
    with pytest.raises(WeightError):
        WeightVector.from_json('{"provenance": "equal"}')


def test_read_dimension_weights(tmp_path):
    csv_path = tmp_path / "prefs.csv"
    csv_path.write_text("# child priorities\ndimension,weight\nEducation,2\nMobility,1\n")
    assert read_dimension_weights(csv_path) == {"Education": 2.0, "Mobility": 1.0}
    json_path = tmp_path / "prefs.json"
    json_path.write_text('{"Education": 3}')
    assert read_dimension_weights(json_path) == {"Education": 3.0}
    bad = tmp_path / "bad.csv"
    bad.write_text("name,value\nEducation,2\n")
    with pytest.raises(WeightError):
        read_dimension_weights(bad)


def test_pca_two_perfectly_correlated_columns():
    a = [1, 0, 1, 0, 1, 1]
    weights = pca_weights(_matrix({"a": a, "b": a}))
    assert weights.provenance == "pca"
    assert weights["a"] == pytest.approx(0.5, abs=1e-12)
    assert weights["b"] == pytest.approx(0.5, abs=1e-12)
    assert weights.eigenvalue == pytest.approx(2.0, abs=1e-9)


def test_pca_drops_constant_column():
    weights = pca_weights(_matrix({
        "a": [1, 0, 1, 0, 0],
        "b": [1, 0, 0, 1, 0],
        "zero": [0, 0, 0, 0, 0],
    }))
    assert weights.dropped_indicators == ("zero",)
    assert weights.ids == ("a", "b")
    assert math.fsum(weights.entries.values()) == pytest.approx(1.0, abs=1e-12)


def test_pca_matches_dense_eigensolver():
    rng = np.random.default_rng(3)
    base = rng.random(60) < 0.5
    columns = {
        "a": base,
        "b": np.where(rng.random(60) < 0.8, base, ~base),
        "c": rng.random(60) < 0.4,
    }
    matrix = _matrix({k: v.astype(float) for k, v in columns.items()})
    weights = pca_weights(matrix)
    corr = np.corrcoef(matrix.values, rowvar=False)
    eigenvalues, eigenvectors = np.linalg.eigh(corr)
    dominant = fix_sign(eigenvectors[:, -1])
    expected = np.abs(dominant) / np.abs(dominant).sum()
    assert np.allclose(weights.as_array(), expected, atol=1e-8)
    assert weights.eigenvalue == pytest.approx(eigenvalues[-1], abs=1e-9)
    assert np.allclose(list(weights.loadings.values()), dominant, atol=1e-8)


def test_pca_invariant_to_row_permutation_and_column_flip():
    rng = np.random.default_rng(11)
    values = (rng.random((40, 4)) < [0.2, 0.5, 0.6, 0.3]).astype(float)
    values[:, 1] = np.maximum(values[:, 1], values[:, 0])
    columns = ["a", "b", "c", "d"]
    original = pca_weights(_matrix(dict(zip(columns, values.T))))
    permuted = values[rng.permutation(40)]
    shuffled = pca_weights(_matrix(dict(zip(columns, permuted.T))))
    flipped = pca_weights(_matrix(dict(zip(columns, (1 - values).T))))
    assert np.allclose(original.as_array(), shuffled.as_array(), atol=1e-8)
    assert np.allclose(original.as_array(), flipped.as_array(), atol=1e-8)


def test_pca_preconditions():
    with pytest.raises(DegenerateDataError):
        pca_weights(_matrix({"a": [1, 0, 1], "b": [1, 1, 1]}))
    with pytest.raises(PreconditionError):
        pca_weights(_matrix({"a": [1.0, np.nan, 0.0], "b": [0, 1, 1]}))
    with pytest.raises(PreconditionError):
        pca_weights(_matrix({"a": [1.0], "b": [0.0]}))


def test_dominant_eigenpair_and_non_convergence():
    lam, vector = dominant_eigenpair(np.diag([3.0, 1.0]))
    assert lam == pytest.approx(3.0, abs=1e-9)
    assert abs(vector[0]) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ConvergenceError) as info:
        dominant_eigenpair(np.diag([3.0, 2.9, 1.0]), max_iterations=2)
    assert info.value.iterations == 2


def test_fix_sign():
    assert fix_sign(np.array([-0.5, -0.2])).tolist() == [0.5, 0.2]
    assert fix_sign(np.array([-1.0, 1.0])).tolist() == [1.0, -1.0]
    assert fix_sign(np.array([0.0, 1.0, -1.0])).tolist() == [0.0, 1.0, -1.0]


def test_equal_weights_ignore_indicator_order_within_dimension():
    catalog = reference_catalog()
    raw = catalog.to_dict()
    for dim in raw["dimensions"]:
        dim["indicators"].reverse()
    shuffled = parse_catalog(json.dumps(raw))
    assert shuffled.indicator_ids != catalog.indicator_ids
    forward, backward = equal_nested_weights(catalog), equal_nested_weights(shuffled)
    assert dict(forward.entries) == dict(backward.entries)

    sample = generate(GeneratorSpec(n=60, deprivation_rate=0.35, rho=0.2, seed=12), catalog)
    first = deprivation_scores(code_deprivations(sample.dataset, catalog), forward)
    second = deprivation_scores(code_deprivations(sample.dataset, shuffled), backward)
    assert np.allclose(first.D, second.D, rtol=0, atol=1e-12)


@pytest.mark.slow
def test_equal_and_pca_rankings_agree_on_correlated_data():
    catalog = reference_catalog()
    for seed in range(10):
        sample = generate(GeneratorSpec(n=2000, rho=0.6, seed=seed), catalog)
        matrix = code_deprivations(sample.dataset, catalog)
        equal = deprivation_scores(matrix, equal_nested_weights(catalog)).D
        pca = deprivation_scores(matrix, pca_weights(matrix)).D
        assert spearman(equal, pca) >= 0.85, seed
