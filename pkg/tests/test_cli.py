import argparse
import xml.etree.ElementTree as ET
from pathlib import Path

import pandas as pd
import pytest

from pymicg import setup
from pymicg.cli import RunConfig, build_parser, main
from pymicg.config import config
from pymicg.tracing import reset_logger


@pytest.fixture(autouse=True)
def reset_setup():
    saved_seed = config.seed
    setup.Setup.reset()
    reset_logger()
    yield
    setup.Setup.reset()
    reset_logger()
    config.seed = saved_seed


@pytest.fixture()
def dataset(tmp_path: Path) -> Path:
    path = tmp_path / "children.csv"
    assert main(["synth", "--n", "60", "--rate", "0.3", "--rho", "0.5", "--seed", "3", "--out", str(path),
                 "--truth", str(tmp_path / "truth.csv")]) == 0
    return path


def _table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", dtype={"child_id": str})


def test_no_command_prints_help(capsys):
    assert main([]) == 0
    assert "usage: micg" in capsys.readouterr().out


def test_missing_input_exits_with_input_code(tmp_path: Path, capsys):
    missing = tmp_path / "absent.csv"
    code = main(["index", "--data", str(missing), "--out-dir", str(tmp_path / "out")])
    assert code == 3
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_invalid_cutoff_exits_with_validation_code(dataset: Path, tmp_path: Path, capsys):
    code = main(["index", "--data", str(dataset), "--k", "1.5", "--out-dir", str(tmp_path / "out")])
    assert code == 2
    assert "identification cutoff" in capsys.readouterr().err


def test_synth_outputs_carry_run_header(dataset: Path, tmp_path: Path):
    header = dataset.read_text(encoding="utf-8").splitlines()[0]
    assert header.startswith("# pymicg ")
    assert "config=" in header and header.endswith("seed=3")
    assert len(_table(dataset)) == 60
    assert len(_table(tmp_path / "truth.csv")) == 60


def test_synth_is_reproducible(dataset: Path, tmp_path: Path):
    again = tmp_path / "again.csv"
    assert main(["synth", "--n", "60", "--rate", "0.3", "--rho", "0.5", "--seed", "3", "--out", str(again)]) == 0
    assert again.read_text(encoding="utf-8").splitlines()[1:] == dataset.read_text(encoding="utf-8").splitlines()[1:]


def test_index_writes_results_and_profiles(dataset: Path, tmp_path: Path):
    out = tmp_path / "out"
    assert main(["index", "--data", str(dataset), "--group", "sex,area", "--out-dir", str(out)]) == 0
    results = _table(out / "results.csv")
    assert list(results.columns[:4]) == ["child_id", "D", "A", "deprived"]
    assert len(results) == 60
    assert ((results["D"] + results["A"]) - 1.0).abs().max() < 1e-12
    weights = _table(out / "weights.csv")
    assert weights["weight"].sum() == pytest.approx(1.0)
    summary = _table(out / "summary.csv").set_index("statistic")["value"]
    assert summary["n"] == 60
    profile = _table(out / "profile_sex_area.csv")
    assert profile.columns[0] == "group" and profile["n"].sum() == 60
    assert (out / "frequencies.csv").is_file()

    svg_path = tmp_path / "web.svg"
    assert main(["chart", "spiderweb", "--profile", str(out / "profile_sex_area.csv"), "--out", str(svg_path)]) == 0
    text = svg_path.read_text(encoding="utf-8")
    assert text.splitlines()[1].startswith("<!-- pymicg ")
    assert ET.fromstring(text).tag.endswith("svg")


def test_index_from_coded_matrix_matches_direct_run(dataset: Path, tmp_path: Path):
    matrix = tmp_path / "matrix.csv"
    assert main(["code", "--data", str(dataset), "--out", str(matrix)]) == 0
    assert main(["index", "--data", str(dataset), "--out-dir", str(tmp_path / "direct")]) == 0
    assert main(["index", "--matrix", str(matrix), "--out-dir", str(tmp_path / "viamatrix")]) == 0
    direct = _table(tmp_path / "direct" / "results.csv")
    via = _table(tmp_path / "viamatrix" / "results.csv")
    assert direct["D"].tolist() == via["D"].tolist()
    assert not (tmp_path / "viamatrix" / "frequencies.csv").exists()


def test_robustness_writes_concordance(dataset: Path, tmp_path: Path):
    out = tmp_path / "robust"
    assert main(["robustness", "--data", str(dataset), "--out-dir", str(out)]) == 0
    concordance = _table(out / "concordance.csv").set_index("scheme")
    assert concordance.loc["equal", "equal"] == pytest.approx(1.0)
    assert concordance.loc["equal", "pca"] == pytest.approx(concordance.loc["pca", "equal"])
    assert (out / "densities.svg").is_file()


def test_regress_quantiles(tmp_path: Path):
    data = tmp_path / "reg.csv"
    rows = [f"c{i},{i},{2 * i + (1 if i % 2 else -1)}" for i in range(1, 21)]
    data.write_text("child_id,x,y\n" + "\n".join(rows) + "\n", encoding="utf-8")
    out = tmp_path / "fits.csv"
    assert main(["regress", "--data", str(data), "--y", "y", "--x", "x", "--tau", "0.5", "--out", str(out)]) == 0
    fits = _table(out)
    assert list(fits.columns) == ["term", "estimate", "se", "tau"]
    assert len(fits) == 4


def test_simulate_writes_trajectories(tmp_path: Path):
    coupled = tmp_path / "coupled.csv"
    assert main(["simulate", "coupled", "--h", "0.01", "--T", "0.1", "--out", str(coupled)]) == 0
    table = _table(coupled)
    assert list(table.columns) == ["t", "f_x", "f_y", "f_z"]
    assert len(table) == 11

    geo = tmp_path / "geo.csv"
    assert main(["simulate", "geodesic", "--metric", "custom", "--entries", "1/y^2,0;0,1/y^2",
                 "--x0", "0", "1", "--v0", "0", "1", "--h", "0.01", "--T", "0.5", "--out", str(geo)]) == 0
    path = _table(geo)
    assert list(path.columns) == ["t", "x", "y", "dx", "dy"]
    assert path["x"].abs().max() < 1e-9


def test_simulate_custom_metric_needs_entries(tmp_path: Path):
    code = main(["simulate", "geodesic", "--metric", "custom", "--x0", "0", "1", "--v0", "1", "0",
                 "--out", str(tmp_path / "geo.csv")])
    assert code == 2


def test_run_digest_ignores_seed():
    parser = build_parser()
    first = RunConfig.from_args(parser.parse_args(["synth", "--n", "10", "--out", "a.csv", "--seed", "1"]))
    second = RunConfig.from_args(parser.parse_args(["synth", "--n", "10", "--out", "a.csv", "--seed", "2"]))
    third = RunConfig.from_args(parser.parse_args(["synth", "--n", "11", "--out", "a.csv", "--seed", "1"]))
    assert first.digest == second.digest
    assert first.digest != third.digest
    assert first.header.endswith("seed=1")


def test_seed_falls_back_to_config(monkeypatch):
    monkeypatch.setattr(config, "seed", 42)
    run = RunConfig.from_args(build_parser().parse_args(["synth", "--out", "a.csv"]))
    assert run.seed == 42


def test_frontier_runs_with_same_seed_are_byte_identical(dataset: Path, tmp_path: Path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert main(["frontier", "--data", str(dataset), "--chains", "2", "--iterations", "120", "--burn-in", "40",
                     "--seed", "7", "--out-dir", str(out)]) == 0
        outputs.append({path.name: path.read_bytes() for path in sorted(out.iterdir())})
    assert "draws.csv" in outputs[0]
    assert outputs[0] == outputs[1]

@pytest.mark.slow
def test_frontier_then_scatter(dataset: Path, tmp_path: Path):
    out = tmp_path / "frontier"
    assert main(["frontier", "--data", str(dataset), "--chains", "2", "--iterations", "200", "--burn-in", "100",
                 "--thinning", "1", "--seed", "5", "--q", "10", "--out-dir", str(out)]) == 0
    profiles = _table(out / "profiles.csv")
    assert len(profiles) == 60
    assert len(_table(out / "left_behind.csv")) == 6
    svg = tmp_path / "scatter.svg"
    assert main(["chart", "scatter", "--profiles", str(out / "profiles.csv"), "--data", str(dataset),
                 "--out", str(svg)]) == 0
    assert "panel-b" in svg.read_text(encoding="utf-8")
