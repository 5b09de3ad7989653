"""Indicator weight vectors: nested equal, custom dimension weights, binary PCA."""
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pymicg.config import config
from pymicg.data_model import DeprivationMatrix, IndicatorCatalog
from pymicg.exceptions import (
    ConvergenceError,
    DegenerateDataError,
    InputError,
    PreconditionError,
    ValidationError,
    WeightError,
)
from pymicg.tracing import log, stage

PROVENANCES = ("equal", "custom", "pca")


@dataclass(frozen=True)
class WeightVector:
    """
    Nonnegative indicator weights summing to one.

    ``entries`` keeps catalog order. For PCA weights ``loadings`` holds the
    sign-fixed dominant eigenvector and ``eigenvalue`` its eigenvalue.
    """
    entries: Mapping[str, float]
    provenance: str
    dropped_indicators: Tuple[str, ...] = ()
    loadings: Optional[Mapping[str, float]] = field(default=None, compare=False)
    eigenvalue: Optional[float] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise WeightError(f"unknown provenance {self.provenance!r}")
        values = list(self.entries.values())
        if any((not math.isfinite(v)) or v < 0 for v in values):
            raise WeightError("weights must be finite and nonnegative")
        if abs(math.fsum(values) - 1.0) > 1e-12:
            raise WeightError(f"weights sum to {math.fsum(values)!r}, expected 1")

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(self.entries)

    def __getitem__(self, indicator_id: str) -> float:
        return self.entries[indicator_id]

    def __len__(self) -> int:
        return len(self.entries)

    def as_array(self, ids: Optional[Sequence[str]] = None) -> np.ndarray:
        """Weights aligned to ``ids``; ids without an entry weigh 0."""
        ids = self.ids if ids is None else ids
        return np.array([self.entries.get(i, 0.0) for i in ids], dtype=float)

    def dimension_weights(self, catalog: IndicatorCatalog) -> Dict[str, float]:
        return {
            dim.name: math.fsum(self.entries.get(ind.id, 0.0) for ind in dim.indicators)
            for dim in catalog.dimensions
        }

    def to_dict(self) -> Dict[str, object]:
        payload: Dict[str, object] = {
            "provenance": self.provenance,
            "weights": dict(self.entries),
            "dropped_indicators": list(self.dropped_indicators),
        }
        if self.loadings is not None:
            payload["loadings"] = dict(self.loadings)
        if self.eigenvalue is not None:
            payload["eigenvalue"] = self.eigenvalue
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["indicator,weight"]
        lines.extend(f"{key},{value!r}" for key, value in self.entries.items())
        lines.extend(f"{key}," for key in self.dropped_indicators)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WeightVector":
        try:
            raw = json.loads(text)
            return cls(
                {str(k): float(v) for k, v in raw["weights"].items()},
                raw.get("provenance", "custom"),
                tuple(raw.get("dropped_indicators", ())),
                raw.get("loadings"),
                raw.get("eigenvalue"),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise WeightError(f"not a weight vector document: {e}") from e


def _normalize(values: Sequence[float]) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    total = math.fsum(array)
    if total <= 0:
        raise WeightError("weights are all zero")
    return array / total


def _split_within_dimensions(catalog: IndicatorCatalog, dim_weights: Sequence[float]) -> Dict[str, float]:
    entries: Dict[str, float] = {}
    for dim, weight in zip(catalog.dimensions, dim_weights):
        share = float(weight) / len(dim.indicators)
        for ind in dim.indicators:
            entries[ind.id] = share
    return entries


def equal_nested_weights(catalog: IndicatorCatalog) -> WeightVector:
    """Each dimension weighs 1/(number of dimensions), split equally inside."""
    n_dims = len(catalog.dimensions)
    entries = {
        ind.id: 1.0 / (n_dims * len(dim.indicators))
        for dim in catalog.dimensions
        for ind in dim.indicators
    }
    return WeightVector(entries, "equal")


def custom_weights(dimension_weights: Mapping[str, float], catalog: IndicatorCatalog) -> WeightVector:
    """
    Normalize user dimension weights to sum one and split equally within each
    dimension.
    """
    names = catalog.dimension_names
    unknown = [name for name in dimension_weights if name not in names]
    if unknown:
        raise WeightError(f"unknown dimension(s): {unknown}")
    absent = [name for name in names if name not in dimension_weights]
    if absent:
        raise WeightError(f"no weight given for dimension(s): {absent}")
    raw = [float(dimension_weights[name]) for name in names]
    if any(not math.isfinite(w) for w in raw):
        raise WeightError("dimension weights must be finite")
    negative = [name for name, w in zip(names, raw) if w < 0]
    if negative:
        raise WeightError(f"negative weight for dimension(s): {negative}")
    return WeightVector(_split_within_dimensions(catalog, _normalize(raw)), "custom")


def read_dimension_weights(path: Union[str, Path]) -> Dict[str, float]:
    """Read dimension weights from JSON (``{name: weight}``) or CSV (``dimension,weight``)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(path, f"cannot read {path}: {e.strerror or e}") from e
    if str(path).lower().endswith(".json"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise WeightError(f"{path}: invalid JSON: {e.msg}") from e
        if not isinstance(raw, dict):
            raise WeightError(f"{path}: expected an object of dimension weights")
        return {str(k): float(v) for k, v in raw.items()}
    frame = pd.read_csv(io.StringIO(text), comment="#")
    if list(frame.columns[:2]) != ["dimension", "weight"]:
        raise WeightError(f"{path}: expected columns 'dimension,weight'")
    return {str(name): float(weight) for name, weight in zip(frame["dimension"], frame["weight"])}


def dominant_eigenpair(
    matrix: np.ndarray,
    tol: Optional[float] = None,
    max_iterations: Optional[int] = None,
    seed: int = 0,
) -> Tuple[float, np.ndarray]:
    """
    Dominant eigenpair of a symmetric positive semidefinite matrix by power
    iteration with a residual stopping test ``||A x - lam x|| < tol``.
    """
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    tol = config.pca_tolerance if tol is None else tol
    max_iterations = config.pca_max_iterations if max_iterations is None else max_iterations

    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    x /= np.linalg.norm(x)
    for iteration in range(1, max_iterations + 1):
        y = A @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            # start vector in the null space
            x = rng.normal(size=n)
            x /= np.linalg.norm(x)
            continue
        x = y / y_norm
        lam = float(x @ A @ x)
        residual = np.linalg.norm(A @ x - lam * x)
        if residual < tol * max(1.0, abs(lam)):
            return lam, x
    raise ConvergenceError(
        f"power iteration did not converge in {max_iterations} iterations", iterations=max_iterations
    )


def fix_sign(vector: np.ndarray) -> np.ndarray:
    """Flip so the entry sum is >= 0; on a zero sum make the first nonzero entry positive."""
    total = math.fsum(vector)
    if total < 0:
        return -vector
    if total == 0:
        nonzero = np.flatnonzero(vector)
        if len(nonzero) and vector[nonzero[0]] < 0:
            return -vector
    return vector


@stage("pca_weights")
def pca_weights(matrix: DeprivationMatrix) -> WeightVector:
    """
    Weights from the dominant eigenvector of the indicator correlation matrix.

    Zero-variance columns are dropped and listed in ``dropped_indicators``;
    the remaining weights are the absolute sign-fixed loadings normalized to
    sum one.
    """
    if matrix.has_missing:
        raise PreconditionError("pca weights need a matrix without missing cells")
    values = matrix.values
    if values.shape[0] < 2:
        raise PreconditionError("pca weights need at least 2 children")
    ids = matrix.indicator_ids
    constant = np.all(values == values[0], axis=0)
    kept = [i for i, c in zip(ids, constant) if not c]
    dropped = tuple(i for i, c in zip(ids, constant) if c)
    if len(kept) < 2:
        raise DegenerateDataError(f"need at least 2 non-constant columns, found {len(kept)}")
    if dropped:
        log.log_info(f"dropped {len(dropped)} zero-variance indicator(s)", dropped=list(dropped))

    corr = np.corrcoef(values[:, ~constant], rowvar=False)
    if not np.all(np.isfinite(corr)):
        raise ValidationError("correlation matrix is not finite")
    eigenvalue, vector = dominant_eigenpair(corr)
    vector = fix_sign(vector)
    weights = _normalize(np.abs(vector))
    return WeightVector(
        dict(zip(kept, (float(w) for w in weights))),
        "pca",
        dropped,
        loadings=dict(zip(kept, (float(v) for v in vector))),
        eigenvalue=eigenvalue,
    )
