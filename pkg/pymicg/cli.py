#!/usr/bin/env python3
"""Command-line interface for the MICG pipeline."""

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from pymicg import charts, ecodyn, frontier, index, regress, stats, synth, weighting
from pymicg.config import config
from pymicg.data_model import (
    MISSING_POLICIES,
    ChildDataset,
    DeprivationMatrix,
    IndicatorCatalog,
    code_deprivations,
    frame_to_csv,
    load_catalog,
    parse_matrix,
    read_records,
    reference_catalog,
)
from pymicg.exceptions import InputError, MicgError, ValidationError
from pymicg.rules import NumericExpression
from pymicg.setup import Setup
from pymicg.tracing import log

PROG = "micg"
# options naming input files; they must exist before a run starts
INPUT_OPTIONS = ("catalog", "data", "matrix", "dimension_weights", "profile", "profiles", "merge")
NOT_HASHED = ("func", "command_path", "seed", "log_level", "log_format")


def _get_version() -> str:
    """Get the package version dynamically."""
    try:
        from importlib.metadata import PackageNotFoundError, version
        return version("pymicg")
    except PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class RunConfig:
    """
    Everything that determines a command's outputs. Its canonical JSON is
    hashed into the header of every file the command writes.
    """
    command: str
    seed: int
    options: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        options = {
            key: (str(value) if isinstance(value, Path) else value)
            for key, value in sorted(vars(args).items())
            if key not in NOT_HASHED and value is not None
        }
        run = cls(args.command_path, Setup.resolve_seed(args.seed), options)
        run.check_inputs()
        return run

    def check_inputs(self) -> None:
        paths = [self.options[key] for key in INPUT_OPTIONS if self.options.get(key) is not None]
        paths += [spec.partition("=")[2] for spec in self.options.get("curve") or ()]
        for path in paths:
            if not Path(path).is_file():
                raise InputError(path, f"input file not found: {path}")

    def canonical_json(self) -> str:
        # seed is reported next to the digest, not inside it
        hashed = {key: value for key, value in self.options.items() if key not in NOT_HASHED}
        return json.dumps({"command": self.command, "options": hashed}, sort_keys=True, separators=(",", ":"), default=str)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]

    @property
    def header(self) -> str:
        return f"pymicg {_get_version()} config={self.digest} seed={self.seed}"


def write_output(path: Path, text: str, run: RunConfig) -> Path:
    """Write ``text`` behind the run header (an XML comment for SVG)."""
    path = Path(path)
    if path.suffix.lower() == ".svg":
        content = charts.with_header(text, run.header)
    else:
        content = f"# {run.header}\n{text}"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
    except OSError as e:
        raise InputError(path, f"cannot write {path}: {e.strerror or e}") from e
    log.log_info(f"wrote {path}", output=str(path))
    return path


def _split_list(value: Optional[str]) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()] if value else []


def _parse_assignments(pairs: Optional[Sequence[str]], what: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"{what} must look like name=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _float(value: str, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"{what}: {value!r} is not a number") from None


def _catalog(args: argparse.Namespace) -> IndicatorCatalog:
    params = {k: _float(v, "--param") for k, v in _parse_assignments(getattr(args, "param", None), "--param").items()}
    if getattr(args, "catalog", None):
        return load_catalog(args.catalog, params or None)
    return reference_catalog(params or None)


def _read_table(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, comment="#", dtype={"child_id": str})
    except OSError as e:
        raise InputError(path, f"cannot read {path}: {e.strerror or e}") from e


def _policy(args: argparse.Namespace) -> str:
    return args.policy or config.missing_policy


def _weights(scheme: str, matrix: DeprivationMatrix, catalog: IndicatorCatalog,
             dimension_weights: Optional[Path]) -> weighting.WeightVector:
    if scheme == "equal":
        return weighting.equal_nested_weights(catalog)
    if scheme == "pca":
        return weighting.pca_weights(matrix)
    if dimension_weights is None:
        raise ValidationError("--weights custom needs --dimension-weights")
    return weighting.custom_weights(weighting.read_dimension_weights(dimension_weights), catalog)


def _matrix(args: argparse.Namespace, catalog: IndicatorCatalog) -> Tuple[DeprivationMatrix, Optional[ChildDataset]]:
    if getattr(args, "matrix", None):
        return parse_matrix(Path(args.matrix).read_text(encoding="utf-8"), _policy(args)), None
    if not getattr(args, "data", None):
        raise ValidationError("either --data or --matrix is required")
    dataset = read_records(args.data, catalog)
    return code_deprivations(dataset, catalog, _policy(args)), dataset


# Subcommands


def _cmd_code(args: argparse.Namespace, run: RunConfig) -> int:
    catalog = _catalog(args)
    matrix, _ = _matrix(args, catalog)
    write_output(args.out, matrix.to_csv(), run)
    return 0


def _cmd_index(args: argparse.Namespace, run: RunConfig) -> int:
    catalog = _catalog(args)
    matrix, dataset = _matrix(args, catalog)
    weights = _weights(args.weights, matrix, catalog, args.dimension_weights)
    results = index.deprivation_scores(matrix, weights, args.k)
    dimensions = index.dimension_achievements(matrix, catalog, weights, binary=args.binary_dimensions)
    out = Path(args.out_dir)
    write_output(out / "results.csv", results.to_csv(dimensions), run)
    write_output(out / "weights.csv", weights.to_csv(), run)
    summary = index.summarize(results)
    summary_frame = pd.DataFrame({"statistic": list(summary), "value": [float(v) for v in summary.values()]})
    write_output(out / "summary.csv", frame_to_csv(summary_frame), run)
    if dataset is not None:
        write_output(out / "frequencies.csv", index.frequency_table(dataset).to_csv(), run)
    for spec in args.group or ():
        keys = _split_list(spec)
        if dataset is None:
            raise ValidationError("--group needs --data for the grouping columns")
        profile = index.group_profile(dimensions, dataset.frame, keys)
        write_output(out / f"profile_{'_'.join(keys)}.csv", profile.to_csv(), run)
    return 0


def _cmd_robustness(args: argparse.Namespace, run: RunConfig) -> int:
    catalog = _catalog(args)
    matrix, _ = _matrix(args, catalog)
    schemes = ["equal", "pca"] + (["custom"] if args.dimension_weights else [])
    out = Path(args.out_dir)
    scores: Dict[str, pd.Series] = {}
    curves: Dict[str, stats.DensityCurve] = {}
    for scheme in schemes:
        weights = _weights(scheme, matrix, catalog, args.dimension_weights)
        results = index.deprivation_scores(matrix, weights, args.k)
        scores[scheme] = results.frame["A"]
        curves[scheme] = stats.kde(results.A, bandwidth=args.bandwidth)
        write_output(out / f"weights_{scheme}.csv", weights.to_csv(), run)
        write_output(out / f"density_{scheme}.csv", curves[scheme].to_csv(), run)
    write_output(out / "concordance.csv", stats.concordance(scores).to_csv(), run)
    write_output(out / "densities.svg", charts.density_svg(curves, title="MICG by weighting scheme"), run)
    return 0


def _cmd_frontier(args: argparse.Namespace, run: RunConfig) -> int:
    catalog = _catalog(args)
    dataset = read_records(args.data, catalog)
    matrix = code_deprivations(dataset, catalog, _policy(args))
    weights = _weights(args.weights, matrix, catalog, args.dimension_weights)
    results = index.deprivation_scores(matrix, weights, args.k)
    covariates = _split_list(args.covariates) + (["country"] if args.country else [])
    frame = dataset.frame.loc[list(matrix.child_ids)]
    X, terms = frontier.build_design(frame, covariates)
    cfg = frontier.McmcConfig.from_config(
        seed=run.seed, chains=args.chains, iterations=args.iterations, burn_in=args.burn_in, thinning=args.thinning,
    )
    with log.with_context(seed=run.seed):
        draws = frontier.fit_frontier(results.A, X, cfg, child_ids=matrix.child_ids, names=terms)
    profiles = frontier.left_behind(draws, predictive=args.predictive)
    out = Path(args.out_dir)
    write_output(out / "draws.csv", draws.to_csv(include_shortfall=args.shortfall_draws), run)
    write_output(out / "summary.csv", frame_to_csv(draws.summary()), run)
    write_output(out / "profiles.csv", frontier.profiles_to_csv(profiles), run)
    chosen = frontier.bottom_share(profiles, args.q)
    write_output(out / "left_behind.csv", frontier.profiles_to_csv(chosen), run)
    for child_id in args.density or ():
        curve = frontier.opportunity_distribution(draws, child_id, predictive=args.predictive)
        write_output(out / f"opportunity_{child_id}.csv", curve.to_csv(), run)
    return 0


def _cmd_regress(args: argparse.Namespace, run: RunConfig) -> int:
    table = _read_table(args.data)
    if args.merge:
        other = _read_table(args.merge)
        if "child_id" not in table.columns or "child_id" not in other.columns:
            raise ValidationError("--merge joins on child_id, which both tables must have")
        table = table.merge(other, on="child_id", how="inner", suffixes=("", "_merged"))
    y, X, terms = regress.design_from_columns(table, args.y, _split_list(args.x), intercept=not args.no_intercept)
    fits = [] if args.no_ols else [regress.ols_fit(y, X, terms)]
    fits.extend(regress.quantile_fits(y, X, args.tau or (), terms))
    if not fits:
        raise ValidationError("nothing to fit: give --tau or drop --no-ols")
    write_output(args.out, regress.fits_to_csv(fits), run)
    return 0


def _curves_from_args(args: argparse.Namespace) -> Dict[str, stats.DensityCurve]:
    medians = {k: _float(v, "--median") for k, v in _parse_assignments(args.median, "--median").items()}
    curves: Dict[str, stats.DensityCurve] = {}
    for label, path in _parse_assignments(args.curve, "--curve").items():
        table = _read_table(Path(path))
        if not {"x", "density"} <= set(table.columns):
            raise ValidationError(f"{path}: expected columns 'x,density'")
        curves[label] = stats.DensityCurve(
            table["x"].to_numpy(dtype=float), table["density"].to_numpy(dtype=float), float("nan"), medians.get(label),
        )
    return curves


def _cmd_chart(args: argparse.Namespace, run: RunConfig) -> int:
    colors = _split_list(args.colors) or None
    if args.chart == "spiderweb":
        table = _read_table(args.profile)
        if "group" not in table.columns:
            raise ValidationError(f"{args.profile}: expected a 'group' column")
        axes = [c for c in table.columns if c not in ("group", "n")]
        series = {str(row["group"]): [float(row[a]) for a in axes] for _, row in table.iterrows()}
        svg = charts.spiderweb_svg(charts.SpiderwebSpec(tuple(axes), series, colors=colors, title=args.title))
    elif args.chart == "density":
        curves = _curves_from_args(args)
        svg = charts.density_svg(curves, title=args.title, colors=colors)
    else:
        profiles = _read_table(args.profiles)
        catalog = _catalog(args)
        dataset = read_records(args.data, catalog)
        frame = dataset.frame.reindex(profiles["child_id"].astype(str))
        groups = (frame["sex"].astype(str) + "|" + frame["area"].astype(str)).tolist()
        svg = charts.scatter_lnb_svg(profiles["achievement"], profiles["mean"], groups, q=args.q, title=args.title)
    write_output(args.out, svg, run)
    return 0


def _cmd_simulate(args: argparse.Namespace, run: RunConfig) -> int:
    if args.system == "coupled":
        params = ecodyn.CurvatureParams(*args.phi) if args.phi else ecodyn.curvature_preset(args.preset)
        start = ecodyn.CoupledState(*args.f0)
        if args.kappa:
            rate = NumericExpression(args.kappa, ("t",))
            trajectory = ecodyn.chronosystem_modulate(
                None if args.no_coupling else params, lambda t: rate(t=t), start, args.h, args.T,
            )
        else:
            trajectory = ecodyn.integrate_coupled(params, start, args.h, args.T)
    else:
        if args.metric == "custom":
            if not args.entries:
                raise ValidationError("--metric custom needs --entries")
            rows = [_split_list(row) for row in args.entries.split(";")]
            metric = ecodyn.custom_metric(rows)
        else:
            metric = ecodyn.metric_preset(args.metric)
        trajectory = ecodyn.geodesic(metric, args.x0, args.v0, args.h, args.T)
    write_output(args.out, trajectory.to_csv(), run)
    return 0


def _cmd_synth(args: argparse.Namespace, run: RunConfig) -> int:
    catalog = _catalog(args)
    spec = synth.GeneratorSpec(
        n=args.n,
        deprivation_rate=args.rate,
        rho=args.rho,
        female_shift=args.female_shift,
        rural_shift=args.rural_shift,
        missing_rate=args.missing_rate,
        countries=tuple(args.country or ("synthland",)),
        beta=tuple(args.beta),
        sigma_v=args.sigma_v,
        lam=args.lam,
        seed=run.seed,
    )
    sample = synth.generate(spec, catalog)
    write_output(args.out, sample.csv, run)
    if args.truth:
        write_output(args.truth, sample.truth_csv(), run)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="random seed (falls back to MICG_SEED, then 0)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None)
    parser.add_argument("--log-format", choices=["color", "plain", "json", "logfmt"], default=None)


def _add_catalog(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--catalog", type=Path, help="indicator catalog JSON (default: shipped reference catalog)")
    parser.add_argument("--param", action="append", metavar="NAME=VALUE", help="override a catalog parameter")


def _add_pipeline(parser: argparse.ArgumentParser, with_matrix: bool = True) -> None:
    _add_catalog(parser)
    parser.add_argument("--data", type=Path, help="child records CSV")
    if with_matrix:
        parser.add_argument("--matrix", type=Path, help="deprivation matrix CSV written by 'micg code'")
    parser.add_argument("--policy", choices=MISSING_POLICIES, default=None, help="missing-data policy")
    parser.add_argument("--k", type=float, default=None, help="identification cutoff in (0, 1]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Multidimensional Index of Child Growth toolkit", prog=PROG)
    parser.add_argument("--version", action="version", version=f"%(prog)s {_get_version()}")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    p = subparsers.add_parser("code", help="code child records into a deprivation matrix")
    _add_pipeline(p, with_matrix=False)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_code, command_path="code")

    p = subparsers.add_parser("index", help="deprivation scores, achievements, profiles and frequencies")
    _add_pipeline(p)
    p.add_argument("--weights", choices=["equal", "pca", "custom"], default="equal")
    p.add_argument("--dimension-weights", type=Path, help="JSON or CSV of dimension weights for --weights custom")
    p.add_argument("--group", action="append", metavar="KEYS", help="comma-separated grouping keys, e.g. sex,area")
    p.add_argument("--binary-dimensions", action="store_true", help="dimension scores are all-or-nothing")
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_index, command_path="index")

    p = subparsers.add_parser("robustness", help="compare weighting schemes: concordance and densities")
    _add_pipeline(p)
    p.add_argument("--dimension-weights", type=Path, help="adds a custom weighting scheme")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_robustness, command_path="robustness")

    p = subparsers.add_parser("frontier", help="Bayesian stochastic frontier of opportunities")
    _add_pipeline(p, with_matrix=False)
    p.add_argument("--weights", choices=["equal", "pca", "custom"], default="equal")
    p.add_argument("--dimension-weights", type=Path)
    p.add_argument("--covariates", default="sex,area")
    p.add_argument("--country", action="store_true", help="add country dummies when pooling countries")
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thinning", type=int, default=None)
    p.add_argument("--predictive", action="store_true", help="opportunities net of the shortfall u")
    p.add_argument("--shortfall-draws", action="store_true", help="include u draws in draws.csv")
    p.add_argument("--q", type=float, default=10.0, help="bottom share (percent) written to left_behind.csv")
    p.add_argument("--density", action="append", metavar="CHILD_ID", help="write a child's opportunity density")
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_frontier, command_path="frontier")

    p = subparsers.add_parser("regress", help="OLS and quantile regression")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--merge", type=Path, help="second table joined on child_id")
    p.add_argument("--y", required=True, help="response column")
    p.add_argument("--x", default="", help="comma-separated covariate columns")
    p.add_argument("--tau", type=float, action="append", help="quantile level; repeat for several fits")
    p.add_argument("--no-ols", action="store_true")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_regress, command_path="regress")

    p = subparsers.add_parser("chart", help="SVG figures")
    chart_sub = p.add_subparsers(dest="chart", required=True)
    for name, helptext in (("spiderweb", "group profile spiderweb"), ("density", "density overlay"),
                           ("scatter", "achievement vs opportunity panels")):
        c = chart_sub.add_parser(name, help=helptext)
        c.add_argument("--title", default="")
        c.add_argument("--colors", help="comma-separated colours, one per series")
        c.add_argument("--out", type=Path, required=True)
        _add_common(c)
        c.set_defaults(func=_cmd_chart, command_path=f"chart {name}")
        if name == "spiderweb":
            c.add_argument("--profile", type=Path, required=True, help="profile CSV written by 'micg index --group'")
        elif name == "density":
            c.add_argument("--curve", action="append", required=True, metavar="LABEL=PATH")
            c.add_argument("--median", action="append", metavar="LABEL=VALUE")
        else:
            _add_catalog(c)
            c.add_argument("--profiles", type=Path, required=True, help="profiles CSV written by 'micg frontier'")
            c.add_argument("--data", type=Path, required=True, help="child records CSV (for sex and area)")
            c.add_argument("--q", type=float, default=10.0)

    p = subparsers.add_parser("simulate", help="integrate the ecological dynamics")
    sim_sub = p.add_subparsers(dest="system", required=True)
    c = sim_sub.add_parser("coupled", help="coupled potentials, optionally chronosystem-modulated")
    c.add_argument("--preset", choices=sorted(ecodyn.PRESETS), default="chaotic")
    c.add_argument("--phi", type=float, nargs=3, metavar=("PHI1", "PHI2", "PHI3"))
    c.add_argument("--f0", type=float, nargs=3, default=[1.0, 1.0, 1.0])
    c.add_argument("--kappa", help="deformation rate expression in t, e.g. 'sin(t)'")
    c.add_argument("--no-coupling", action="store_true", help="drop the coupled terms (pure chronosystem)")
    c.add_argument("--h", type=float, default=1e-3)
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--out", type=Path, required=True)
    _add_common(c)
    c.set_defaults(func=_cmd_simulate, command_path="simulate coupled")

    c = sim_sub.add_parser("geodesic", help="geodesic of a metric field")
    c.add_argument("--metric", choices=sorted(ecodyn.METRIC_PRESETS) + ["custom"], default="minkowski")
    c.add_argument("--entries", help="custom metric rows separated by ';', entries by ','")
    c.add_argument("--x0", type=float, nargs="+", required=True)
    c.add_argument("--v0", type=float, nargs="+", required=True)
    c.add_argument("--h", type=float, default=1e-3)
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--out", type=Path, required=True)
    _add_common(c)
    c.set_defaults(func=_cmd_simulate, command_path="simulate geodesic")

    p = subparsers.add_parser("synth", help="write a synthetic dataset and its ground truth")
    _add_catalog(p)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--rate", type=float, default=0.3, help="deprivation probability for every indicator")
    p.add_argument("--rho", type=float, default=0.0, help="latent single-factor correlation")
    p.add_argument("--female-shift", type=float, default=0.0)
    p.add_argument("--rural-shift", type=float, default=0.0)
    p.add_argument("--missing-rate", type=float, default=0.0)
    p.add_argument("--country", action="append")
    p.add_argument("--beta", type=float, nargs="+", default=[2.0, -0.5])
    p.add_argument("--sigma-v", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=5.0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--truth", type=Path)
    _add_common(p)
    p.set_defaults(func=_cmd_synth, command_path="synth")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the micg command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 0

    if not Setup.is_setup_done():
        Setup.initialize("micg", log_level=args.log_level, log_format=args.log_format)
    try:
        run = RunConfig.from_args(args)
        with log.with_context(command=run.command):
            return args.func(args, run)
    except MicgError as e:
        log.log_error(f"Error: {e}", fn_type="command", function=args.command_path, error_type=type(e).__name__)
        print(f"{PROG}: error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
