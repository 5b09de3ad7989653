"""
Counting-approach aggregation: deprivation scores, achievements, dimension
profiles and population frequency tables.
"""
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pymicg.config import config
from pymicg.data_model import ChildDataset, DeprivationMatrix, IndicatorCatalog, frame_to_csv
from pymicg.exceptions import PreconditionError, ValidationError, WeightError
from pymicg.tracing import stage
from pymicg.weighting import WeightVector


@dataclass(frozen=True)
class MicgResult:
    child_id: str
    D: float
    A: float
    deprived: bool
    k: float


@dataclass(frozen=True, eq=False)
class MicgResults:
    """Per-child scores; ``frame`` is indexed by child_id with columns D, A, deprived."""
    frame: pd.DataFrame
    k: float
    provenance: str

    def __iter__(self) -> Iterator[MicgResult]:
        for child_id, row in self.frame.iterrows():
            yield MicgResult(child_id, float(row["D"]), float(row["A"]), bool(row["deprived"]), self.k)

    def __len__(self) -> int:
        return len(self.frame)

    def __getitem__(self, child_id: str) -> MicgResult:
        row = self.frame.loc[child_id]
        return MicgResult(child_id, float(row["D"]), float(row["A"]), bool(row["deprived"]), self.k)

    @property
    def D(self) -> np.ndarray:
        return self.frame["D"].to_numpy(dtype=float)

    @property
    def A(self) -> np.ndarray:
        return self.frame["A"].to_numpy(dtype=float)

    def to_frame(self, dimension_scores: Optional[pd.DataFrame] = None) -> pd.DataFrame:
        frame = self.frame.copy()
        frame["deprived"] = frame["deprived"].astype(int)
        if dimension_scores is not None:
            frame = frame.join(dimension_scores, how="left")
        return frame

    def to_csv(self, dimension_scores: Optional[pd.DataFrame] = None) -> str:
        return frame_to_csv(self.to_frame(dimension_scores).reset_index())


def _aligned_weights(matrix: DeprivationMatrix, weights: WeightVector) -> np.ndarray:
    unknown = [i for i in weights.ids if i not in matrix.indicator_ids]
    if unknown:
        raise WeightError(f"weights reference indicator(s) absent from the matrix: {unknown}")
    return weights.as_array(matrix.indicator_ids)


def _weighted_deprivation(cells: np.ndarray, w: np.ndarray, renormalize: bool) -> float:
    present = ~np.isnan(cells)
    if present.all():
        return math.fsum(w * cells)
    if not renormalize:
        raise PreconditionError("matrix has missing cells; use the renormalize policy")
    if not present.any():
        raise PreconditionError("child has every indicator missing")
    total = math.fsum(w[present])
    if total <= 0:
        raise PreconditionError("child has zero weight on its observed indicators")
    return math.fsum(w[present] * cells[present]) / total


@stage("deprivation_scores")
def deprivation_scores(matrix: DeprivationMatrix, weights: WeightVector, k: Optional[float] = None) -> MicgResults:
    """
    D_i = sum_j w_j c_ij, A_i = 1 - D_i and deprived_i = D_i >= k.

    Under the ``renormalize`` policy the weights of a child's observed cells
    are rescaled to sum one.
    """
    k = config.identification_cutoff if k is None else float(k)
    if not 0 < k <= 1:
        raise ValidationError(f"identification cutoff must be in (0, 1], got {k}")
    w = _aligned_weights(matrix, weights)
    renormalize = matrix.policy == "renormalize"
    values = matrix.values
    d = np.array([_weighted_deprivation(row, w, renormalize) for row in values], dtype=float)
    # weight sums may sit a few ulps above one
    d = np.clip(d, 0.0, 1.0)
    frame = pd.DataFrame({"D": d, "A": 1.0 - d, "deprived": d >= k}, index=matrix.frame.index)
    return MicgResults(frame, k, weights.provenance)


def _dimension_columns(matrix: DeprivationMatrix, catalog: IndicatorCatalog) -> List[Tuple[str, List[int]]]:
    position = {ind: i for i, ind in enumerate(matrix.indicator_ids)}
    out = []
    for dim in catalog.dimensions:
        cols = [position[ind.id] for ind in dim.indicators if ind.id in position]
        if not cols:
            raise ValidationError(f"matrix has no indicator of dimension {dim.name!r}")
        out.append((dim.name, cols))
    return out


@stage("dimension_achievements")
def dimension_achievements(matrix: DeprivationMatrix, catalog: IndicatorCatalog, weights: WeightVector,
                           binary: bool = False) -> pd.DataFrame:
    """
    Per-child dimension scores in [0, 1]: one minus the weighted mean
    deprivation of the dimension's indicators, using within-dimension weight
    shares (equal shares when the dimension weighs zero). With ``binary`` a
    dimension scores 1 only when none of its indicators is deprived.
    """
    w = _aligned_weights(matrix, weights)
    renormalize = matrix.policy == "renormalize"
    values = matrix.values
    scores: Dict[str, np.ndarray] = {}
    layout = _dimension_columns(matrix, catalog)
    for name, cols in layout:
        dim_w = w[cols]
        if math.fsum(dim_w) <= 0:
            dim_w = np.ones(len(cols))
        shares = dim_w / math.fsum(dim_w)
        column = np.empty(len(values))
        for r, row in enumerate(values[:, cols]):
            present = ~np.isnan(row)
            if not present.any():
                if not renormalize:
                    raise PreconditionError("matrix has missing cells; use the renormalize policy")
                column[r] = np.nan
                continue
            if present.all():
                deprivation = math.fsum(shares * row)
            elif not renormalize:
                raise PreconditionError("matrix has missing cells; use the renormalize policy")
            elif math.fsum(shares[present]) <= 0:
                deprivation = math.fsum(row[present]) / present.sum()
            else:
                deprivation = math.fsum(shares[present] * row[present]) / math.fsum(shares[present])
            if binary:
                column[r] = 1.0 if deprivation == 0 else 0.0
            else:
                column[r] = 1.0 - min(max(deprivation, 0.0), 1.0)
        scores[name] = column
    frame = pd.DataFrame(scores, index=matrix.frame.index, columns=[n for n, _ in layout])
    return frame


@dataclass(frozen=True, eq=False)
class DimensionProfile:
    """Group label -> dimension -> achievement percentage in [0, 100]."""
    frame: pd.DataFrame
    counts: pd.Series
    keys: Tuple[str, ...]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self.frame.index)

    def series(self, label: str) -> List[float]:
        return [float(v) for v in self.frame.loc[label]]

    def to_csv(self) -> str:
        frame = self.frame.copy()
        frame.insert(0, "n", self.counts.reindex(frame.index).astype(int))
        frame.index.name = "group"
        return frame_to_csv(frame.reset_index())


@stage("group_profile")
def group_profile(scores: pd.DataFrame, groups: pd.DataFrame, keys: Sequence[str]) -> DimensionProfile:
    """
    Mean dimension scores x 100 per group. ``groups`` holds the grouping
    columns indexed by child_id (e.g. ``dataset.frame``); labels join the key
    values with ``|``.
    """
    keys = tuple(keys)
    if not keys:
        raise ValidationError("at least one grouping key is required")
    if scores.empty:
        raise ValidationError("empty group: no children to profile")
    missing_keys = [k for k in keys if k not in groups.columns]
    if missing_keys:
        raise ValidationError(f"unknown grouping key(s): {missing_keys}")
    labels_frame = groups.reindex(scores.index)[list(keys)]
    if labels_frame.isna().to_numpy().any():
        raise ValidationError(f"grouping key(s) {list(keys)} missing for some children")
    labels = labels_frame.astype(str).agg("|".join, axis=1)
    grouped = scores.groupby(labels, sort=True)
    frame = (grouped.mean() * 100.0).clip(0.0, 100.0)
    frame = frame[list(scores.columns)]
    frame.index.name = "group"
    return DimensionProfile(frame, grouped.size(), keys)


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """
    Long-format counts: one row per country x breakdown x category, with
    percentages of the country total.
    """
    frame: pd.DataFrame

    def percent(self, country: str, category: str) -> float:
        row = self.frame[(self.frame["country"] == country) & (self.frame["category"] == category)]
        return float(row["percent"].iloc[0])

    def count(self, country: str, category: str) -> int:
        row = self.frame[(self.frame["country"] == country) & (self.frame["category"] == category)]
        return int(row["count"].iloc[0])

    def to_csv(self) -> str:
        return frame_to_csv(self.frame)


@stage("frequency_table")
def frequency_table(dataset: ChildDataset) -> FrequencyTable:
    frame = dataset.frame
    if frame[["sex", "area"]].isna().to_numpy().any():
        raise PreconditionError("sex and area must be present for every child")
    country = frame["country"].fillna("unknown")
    rows = []
    for name in sorted(country.unique()):
        sub = frame[country == name]
        total = len(sub)
        rows.append((name, "total", "all", total))
        for breakdown, categories in (("area", ("urban", "rural")), ("sex", ("male", "female"))):
            counts = sub[breakdown].value_counts()
            for category in categories:
                rows.append((name, breakdown, category, int(counts.get(category, 0))))
        cross = pd.crosstab(sub["area"], sub["sex"])
        for area in ("urban", "rural"):
            for sex in ("male", "female"):
                value = int(cross.loc[area, sex]) if area in cross.index and sex in cross.columns else 0
                rows.append((name, "area_sex", f"{area}|{sex}", value))
    table = pd.DataFrame(rows, columns=["country", "breakdown", "category", "count"])
    totals = table[table["breakdown"] == "total"].set_index("country")["count"]
    table["percent"] = (100.0 * table["count"] / table["country"].map(totals)).round(1)
    return FrequencyTable(table)


def summarize(results: MicgResults) -> Dict[str, float]:
    """Headcount ratio H and mean D among the deprived (intensity)."""
    n = len(results)
    deprived = results.frame["deprived"].to_numpy(dtype=bool)
    q = int(deprived.sum())
    intensity = math.fsum(results.D[deprived]) / q if q else 0.0
    return {"n": n, "deprived": q, "k": results.k, "H": q / n if n else 0.0, "intensity": intensity}
