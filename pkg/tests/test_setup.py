import pytest
from pymicg import setup, exceptions
from pymicg.config import config


@pytest.fixture(autouse=True)
def reset_setup():
    setup.Setup.reset()
    saved_seed = config.seed
    yield
    config.seed = saved_seed
    setup.Setup.reset()


def test_initialize_and_getters():
    setup.Setup.initialize("micg_test", show_metrics=True)
    assert setup.Setup.is_setup_done()
    assert setup.Setup.get_project() == "MICG_TEST"
    assert setup.Setup.get_level() == 0
    assert setup.Setup.get_show_metrics() is True


def test_increment_decrement_level():
    setup.Setup.initialize("MICG_TEST2", show_metrics=False)
    setup.Setup.increment_level()
    assert setup.Setup.get_level() == 1
    setup.Setup.decrement_level()
    assert setup.Setup.get_level() == 0


def test_double_initialize_raises():
    setup.Setup.initialize("MICG_TEST3", show_metrics=False)
    with pytest.raises(exceptions.SetupAlreadyDoneError):
        setup.Setup.initialize("MICG_TEST3", show_metrics=False)


def test_initialize_applies_seed_override():
    setup.Setup.initialize("MICG_SEEDED", seed=1234)
    assert config.seed == 1234


def test_set_project_requires_setup():
    with pytest.raises(exceptions.SetupNotDoneError):
        setup.Setup.set_project("later")
    setup.Setup.initialize("first")
    setup.Setup.set_project("second")
    assert setup.Setup.get_project() == "SECOND"


def test_testing_mode_captures_and_clears():
    setup.Setup.enable_testing_mode()
    try:
        setup.Setup.capture_log({"message": "hello"})
        assert setup.Setup.get_captured_logs() == [{"message": "hello"}]
        setup.Setup.clear_captured_logs()
        assert setup.Setup.get_captured_logs() == []
    finally:
        setup.Setup.disable_testing_mode()
    with pytest.raises(exceptions.SetupError):
        setup.Setup.get_captured_logs()


def test_disable_file_logging_falls_back_to_config():
    setup.Setup.initialize("MICG_FILES")
    assert setup.Setup.get_disable_file_logging() is config.disable_file_logging
    setup.Setup.reset()
    setup.Setup.initialize("MICG_FILES", disable_file_logging=False)
    assert setup.Setup.get_disable_file_logging() is False


def test_config_reload_reads_environment(monkeypatch):
    monkeypatch.setenv("MICG_CUTOFF", "0.5")
    monkeypatch.setenv("MICG_FRONTIER_CHAINS", "2")
    config.reload()
    try:
        assert config.identification_cutoff == 0.5
        assert config.frontier_chains == 2
    finally:
        monkeypatch.delenv("MICG_CUTOFF")
        monkeypatch.delenv("MICG_FRONTIER_CHAINS")
        config.reload()
    assert config.identification_cutoff == pytest.approx(1 / 3)


def test_resolve_seed_prefers_explicit_then_config():
    config.seed = None
    assert setup.Setup.resolve_seed() == 0
    config.seed = 11
    assert setup.Setup.resolve_seed() == 11
    assert setup.Setup.resolve_seed(5) == 5


def test_reset_keeps_testing_mode():
    setup.Setup.enable_testing_mode()
    try:
        setup.Setup.initialize("MICG_RESET")
        setup.Setup.reset()
        assert not setup.Setup.is_setup_done()
        assert setup.Setup.is_testing_mode()
    finally:
        setup.Setup.disable_testing_mode()


def test_cutoff_setter_rejects_out_of_range():
    saved = config.identification_cutoff
    with pytest.raises(exceptions.ValidationError):
        config.identification_cutoff = 0.0
    with pytest.raises(exceptions.ValidationError):
        config.identification_cutoff = 1.2
    assert config.identification_cutoff == saved
