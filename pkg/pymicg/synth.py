"""
Synthetic child datasets with known ground truth.

Indicator deprivations follow a latent single-factor threshold model: child i
is deprived on indicator j when ``sqrt(rho) F_i + sqrt(1 - rho) e_ij + s_i``
falls below ``Phi^-1(p_j)``, where ``s_i`` is the child's sex/area shift.
Deprivation bits are turned into raw source-column values that the catalog
rules code back to the same bits, so the real pipeline can be checked against
the generator. Frontier achievements ``expit(x'b + v - u)`` ride along.
"""
import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special, stats

from pymicg.data_model import REQUIRED_COLUMNS, ChildDataset, IndicatorCatalog, IndicatorDef, frame_to_csv, \
    ingest_records, reference_catalog
from pymicg.exceptions import ValidationError
from pymicg.frontier import build_design
from pymicg.rules import Number, Text
from pymicg.tracing import log, stage
from pymicg.weighting import WeightVector, equal_nested_weights

NEUTRAL_TEXT = "typical"
_BASE_CANDIDATES = (0.0, 1.0, 2.0, 3.0, 5.0)


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    deprivation_rate: float = 0.3
    probabilities: Mapping[str, float] = field(default_factory=dict)
    rho: float = 0.0
    female_share: float = 0.5
    rural_share: float = 0.5
    female_shift: float = 0.0
    rural_shift: float = 0.0
    missing_rate: float = 0.0
    countries: Tuple[str, ...] = ("synthland",)
    frontier_covariates: Tuple[str, ...] = ("area",)
    beta: Tuple[float, ...] = (2.0, -0.5)
    sigma_v: float = 0.1
    lam: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        for name in ("deprivation_rate", "rho", "female_share", "rural_share", "missing_rate"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        for indicator, p in self.probabilities.items():
            if not 0 <= p <= 1:
                raise ValidationError(f"probability for {indicator!r} must lie in [0, 1], got {p}")
        if not self.countries:
            raise ValidationError("at least one country is required")
        if not (self.sigma_v > 0 and self.lam > 0):
            raise ValidationError("sigma_v and lam must be positive")

    def probability(self, indicator_id: str) -> float:
        return float(self.probabilities.get(indicator_id, self.deprivation_rate))


def _walk(node: Any):
    yield node
    if dataclasses.is_dataclass(node):
        for item in dataclasses.fields(node):
            value = getattr(node, item.name)
            children = value if isinstance(value, tuple) else (value,)
            for child in children:
                if dataclasses.is_dataclass(child):
                    yield from _walk(child)


def _plainness(value: float) -> Tuple[bool, bool, float]:
    """Sort key preferring nonnegative, then integral, then small values."""
    return value < 0, not float(value).is_integer(), abs(value)


def _combo_key(combo: Tuple[Any, ...], ranks: Sequence[Mapping[Any, int]]) -> Tuple[int, int, int]:
    negatives = fractional = total_rank = 0
    for value, rank in zip(combo, ranks):
        total_rank += rank[value]
        if isinstance(value, float):
            negatives += value < 0
            fractional += not value.is_integer()
    return negatives, fractional, total_rank


def _candidates(indicator: IndicatorDef, parameters: Mapping[str, float]) -> Dict[str, List[Any]]:
    nodes = list(_walk(indicator.rule.tree))
    numbers = {float(node.value) for node in nodes if isinstance(node, Number)}
    numbers |= {float(parameters[name]) for name in indicator.rule.parameters}
    texts = sorted({node.value for node in nodes if isinstance(node, Text)})
    numeric = set(_BASE_CANDIDATES)
    for value in numbers:
        numeric |= {value, value - 1.0, value + 1.0, value - 0.5, value + 0.5}
    ordered = sorted(numeric, key=_plainness)
    out: Dict[str, List[Any]] = {}
    for column in indicator.source_columns:
        if column in indicator.rule.categorical_fields:
            out[column] = texts + [NEUTRAL_TEXT]
        else:
            out[column] = list(ordered)
    return out


def witness_values(indicator: IndicatorDef, parameters: Mapping[str, float]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """
    Raw values for the indicator's source columns that the rule codes as
    deprived and as not deprived, in that order.
    """
    candidates = _candidates(indicator, parameters)
    columns = list(candidates)
    ranks = [{value: r for r, value in enumerate(candidates[c])} for c in columns]
    combos = sorted(itertools.product(*(candidates[c] for c in columns)), key=lambda combo: _combo_key(combo, ranks))
    table = {c: [combo[i] for combo in combos] for i, c in enumerate(columns)}
    outcome = indicator.rule.evaluate(table, parameters)
    found: Dict[float, Dict[str, Any]] = {}
    for combo, value in zip(combos, outcome):
        if value in (0.0, 1.0) and value not in found:
            found[value] = dict(zip(columns, combo))
        if len(found) == 2:
            break
    if len(found) < 2:
        raise ValidationError(f"no witness values make indicator {indicator.id!r} both deprived and not deprived")
    return found[1.0], found[0.0]


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    """
    ``truth`` is indexed by child_id with the latent shift, analytic expected
    D under equal nested weights, the generated deprivation bits and the
    frontier quantities (eta, v, u, opportunity, achievement).
    """
    dataset: ChildDataset
    truth: pd.DataFrame
    spec: GeneratorSpec
    design_terms: Tuple[str, ...]
    csv: str

    @property
    def frontier_achievements(self) -> np.ndarray:
        return self.truth["frontier_achievement"].to_numpy(dtype=float)

    def truth_csv(self) -> str:
        return frame_to_csv(self.truth.reset_index())


def expected_deprivation(spec: GeneratorSpec, catalog: IndicatorCatalog, weights: WeightVector,
                         shifts: np.ndarray) -> np.ndarray:
    """sum_j w_j Phi(Phi^-1(p_j) - s_i): the marginal deprivation probability under the threshold model."""
    total = np.zeros(len(shifts))
    for indicator in catalog.indicators:
        cutoff = stats.norm.ppf(spec.probability(indicator.id))
        total += weights[indicator.id] * stats.norm.cdf(cutoff - shifts)
    return total


@stage("generate")
def generate(spec: GeneratorSpec, catalog: Optional[IndicatorCatalog] = None) -> SyntheticSample:
    """Draw a dataset and its ground truth; the same spec always gives the same sample."""
    catalog = catalog or reference_catalog()
    owners: Dict[str, str] = {}
    for indicator in catalog.indicators:
        for column in indicator.source_columns:
            if column in owners:
                raise ValidationError(
                    f"column {column!r} feeds both {owners[column]!r} and {indicator.id!r}; "
                    "synthetic generation needs disjoint source columns"
                )
            owners[column] = indicator.id
    unknown = set(spec.probabilities) - set(catalog.indicator_ids)
    if unknown:
        raise ValidationError(f"probabilities given for unknown indicator(s) {sorted(unknown)}")

    rng = np.random.default_rng(spec.seed)
    n = spec.n
    indicators = catalog.indicators
    width = max(4, len(str(n)))
    child_ids = [f"c{i + 1:0{width}d}" for i in range(n)]
    female = rng.random(n) < spec.female_share
    rural = rng.random(n) < spec.rural_share
    country = rng.choice(np.array(spec.countries, dtype=object), size=n)
    shifts = spec.female_shift * female + spec.rural_shift * rural

    factor = rng.standard_normal(n)
    noise = rng.standard_normal((n, len(indicators)))
    latent = math.sqrt(spec.rho) * factor[:, None] + math.sqrt(1.0 - spec.rho) * noise + shifts[:, None]
    cutoffs = stats.norm.ppf([spec.probability(ind.id) for ind in indicators])
    bits = latent < cutoffs[None, :]
    blanks = rng.random((n, len(indicators))) < spec.missing_rate

    raw: Dict[str, List[Any]] = {
        "child_id": child_ids,
        "sex": np.where(female, "female", "male").tolist(),
        "area": np.where(rural, "rural", "urban").tolist(),
        "country": list(country),
    }
    for j, indicator in enumerate(indicators):
        deprived, fine = witness_values(indicator, catalog.parameters)
        for column in indicator.source_columns:
            raw[column] = [
                None if blanks[i, j] else (deprived if bits[i, j] else fine)[column] for i in range(n)
            ]
    frame = pd.DataFrame(raw, columns=list(REQUIRED_COLUMNS) + list(catalog.source_columns))
    csv = frame_to_csv(frame)
    dataset = ingest_records(csv, catalog)

    X, terms = build_design(dataset.frame, spec.frontier_covariates)
    if len(spec.beta) != X.shape[1]:
        raise ValidationError(f"beta has {len(spec.beta)} entries for design terms {list(terms)}")
    eta = X @ np.asarray(spec.beta, dtype=float)
    v = rng.normal(0.0, spec.sigma_v, n)
    u = rng.exponential(1.0 / spec.lam, n)

    weights = equal_nested_weights(catalog)
    truth = pd.DataFrame({
        "shift": shifts,
        "expected_D": expected_deprivation(spec, catalog, weights, shifts),
        "deprivations": bits.sum(axis=1),
        "frontier_eta": eta,
        "v": v,
        "u": u,
        "opportunity": special.expit(eta + v),
        "frontier_achievement": special.expit(eta + v - u),
    }, index=pd.Index(child_ids, name="child_id"))
    for j, indicator in enumerate(indicators):
        truth[f"bit_{indicator.id}"] = np.where(blanks[:, j], np.nan, bits[:, j].astype(float))
    log.log_info(f"generated {n} synthetic child record(s)", seed=spec.seed, rho=spec.rho)
    return SyntheticSample(dataset, truth, spec, terms, csv)
