import pytest

from pymicg import setup
from pymicg.custom_logging import Logging
from pymicg.exceptions import ValidationError
from pymicg.tracing import LOGGED_ATTRIBUTE, ensure_initialized, log, reset_logger, stage


@pytest.fixture(autouse=True)
def reset_setup():
    setup.Setup.reset()
    reset_logger()
    setup.Setup.enable_testing_mode()
    yield
    setup.Setup.disable_testing_mode()
    reset_logger()
    setup.Setup.reset()


def test_stage_returns_result_and_logs_entry_and_exit():
    setup.Setup.initialize("MICG_STAGE", show_metrics=False)

    @stage("double")
    def double(x):
        return 2 * x

    assert double(3) == 6
    entries = setup.Setup.get_captured_logs()
    assert [e["message"] for e in entries] == ["called...", "Ok."]
    assert all(e["function"] == "double" and e["fn_type"] == "stage" for e in entries)
    assert entries[1]["duration"] >= 0
    assert entries[0]["kwargs"] == {}


def test_stage_defaults_to_qualname():
    setup.Setup.initialize("MICG_STAGE", show_metrics=False)

    @stage()
    def scores():
        return None

    scores()
    assert setup.Setup.get_captured_logs()[0]["function"].endswith("scores")


def test_stage_initializes_setup_lazily():
    assert not setup.Setup.is_setup_done()

    @stage("lazy")
    def lazy():
        return "ok"

    assert lazy() == "ok"
    assert setup.Setup.is_setup_done()
    assert setup.Setup.get_project() == "MICG"


def test_nested_stage_error_logged_once():
    setup.Setup.initialize("MICG_STAGE", show_metrics=False)

    @stage("inner")
    def inner():
        raise ValidationError("bad weights")

    @stage("outer")
    def outer():
        inner()

    with pytest.raises(ValidationError) as info:
        outer()
    assert getattr(info.value, LOGGED_ATTRIBUTE) is True
    errors = [e for e in setup.Setup.get_captured_logs() if e["level"] == "ERROR"]
    assert len(errors) == 1
    assert errors[0]["function"] == "inner"
    assert errors[0]["message"] == "Error: bad weights"
    assert errors[0]["kwargs"]["error_type"] == "ValidationError"
    assert setup.Setup.get_level() == 0


def test_stage_context_reaches_inner_logs():
    setup.Setup.initialize("MICG_STAGE", show_metrics=False)

    @stage("coding")
    def coding():
        log.log_info("excluded 2 children")

    coding()
    info = [e for e in setup.Setup.get_captured_logs() if e["level"] == "INFO"]
    assert info[0]["kwargs"]["stage"] == "coding"


def test_stage_records_metrics_when_enabled():
    setup.Setup.initialize("MICG_STAGE", show_metrics=True)

    @stage("timed")
    def timed():
        return 1

    timed()
    timed()
    snapshot = Logging.metrics_snapshot()
    assert snapshot["timed"]["count"] == 2


def test_ensure_initialized_reuses_instance():
    first = ensure_initialized()
    assert ensure_initialized() is first
