import pytest
from pymicg import exceptions
from pymicg.exceptions import SetupNotDoneError, SetupAlreadyDoneError


def test_exceptions_are_raised():
    with pytest.raises(SetupNotDoneError):
        raise SetupNotDoneError("not done")
    with pytest.raises(SetupAlreadyDoneError):
        raise SetupAlreadyDoneError("already done")


@pytest.mark.parametrize("error, code", [
    (exceptions.MicgError("x"), 1),
    (exceptions.ValidationError("x"), 2),
    (exceptions.CatalogError("x"), 2),
    (exceptions.RankDeficiencyError("x"), 2),
    (exceptions.ChartError("x"), 2),
    (exceptions.ConvergenceError("x", iterations=3), 1),
    (exceptions.BlowUpError(1.5), 1),
    (exceptions.InputError("missing.csv"), 3),
])
def test_exit_codes(error, code):
    assert isinstance(error, exceptions.MicgError)
    assert error.exit_code == code


def test_catalog_syntax_error_carries_position():
    error = exceptions.CatalogSyntaxError("expected a literal", 3, "haz < ")
    assert error.position == 3
    assert isinstance(error, exceptions.ValidationError)
    assert "token 3" in str(error)
    assert "'haz < '" in str(error)


def test_blow_up_and_input_errors_keep_context():
    blow_up = exceptions.BlowUpError(2.25)
    assert blow_up.time == 2.25
    assert "t=2.25" in str(blow_up)
    missing = exceptions.InputError("data/children.csv")
    assert missing.path == "data/children.csv"
    assert "data/children.csv" in str(missing)
