"""
Indicator catalog, child dataset and deprivation coding.

The catalog is JSON with a top-level ``dimensions`` list; each dimension holds
indicators with an ``id``, the source column(s) the rule reads, a cutoff
``rule`` (see :mod:`pymicg.rules`) and a ``description``. Optional
``parameters`` supply values for ``$name`` references inside rules.
"""
import io
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from pymicg.exceptions import CatalogError, EmptyMatrixError, InputError, SchemaError, ValidationError
from pymicg.rules import CutoffRule
from pymicg.tracing import log, stage

REQUIRED_COLUMNS = ("child_id", "sex", "area", "country")
SEX_VALUES = ("male", "female")
AREA_VALUES = ("urban", "rural")
MISSING_POLICIES = ("exclude_child", "treat_nondeprived", "renormalize")
# reference catalog parameters without a published value
UNCALIBRATED_PARAMETERS = ("domestic_task_hours_threshold",)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class IndicatorDef:
    id: str
    source_columns: Tuple[str, ...]
    rule: CutoffRule
    description: str = ""

    @property
    def source_column(self) -> str:
        return self.source_columns[0]


@dataclass(frozen=True)
class DimensionDef:
    name: str
    indicators: Tuple[IndicatorDef, ...]


@dataclass(frozen=True)
class IndicatorCatalog:
    dimensions: Tuple[DimensionDef, ...]
    parameters: Mapping[str, float] = field(default_factory=dict)
    name: str = "catalog"

    @property
    def indicators(self) -> Tuple[IndicatorDef, ...]:
        return tuple(ind for dim in self.dimensions for ind in dim.indicators)

    @property
    def indicator_ids(self) -> Tuple[str, ...]:
        return tuple(ind.id for ind in self.indicators)

    @property
    def dimension_names(self) -> Tuple[str, ...]:
        return tuple(dim.name for dim in self.dimensions)

    def dimension(self, name: str) -> DimensionDef:
        for dim in self.dimensions:
            if dim.name == name:
                return dim
        raise CatalogError(f"unknown dimension {name!r}")

    def dimension_of(self, indicator_id: str) -> str:
        for dim in self.dimensions:
            if any(ind.id == indicator_id for ind in dim.indicators):
                return dim.name
        raise CatalogError(f"unknown indicator {indicator_id!r}")

    def indicator(self, indicator_id: str) -> IndicatorDef:
        for ind in self.indicators:
            if ind.id == indicator_id:
                return ind
        raise CatalogError(f"unknown indicator {indicator_id!r}")

    @property
    def source_columns(self) -> Tuple[str, ...]:
        seen: Dict[str, None] = {}
        for ind in self.indicators:
            for column in ind.source_columns:
                seen.setdefault(column, None)
        return tuple(seen)

    @property
    def numeric_columns(self) -> Tuple[str, ...]:
        fields = set().union(*(ind.rule.numeric_fields for ind in self.indicators))
        return tuple(c for c in self.source_columns if c in fields)

    @property
    def categorical_columns(self) -> Tuple[str, ...]:
        fields = set().union(*(ind.rule.categorical_fields for ind in self.indicators))
        return tuple(c for c in self.source_columns if c in fields)

    def with_parameters(self, **overrides: float) -> "IndicatorCatalog":
        unknown = set(overrides) - set(self.parameters)
        if unknown:
            raise CatalogError(f"unknown catalog parameter(s) {sorted(unknown)}")
        return replace(self, parameters={**self.parameters, **{k: float(v) for k, v in overrides.items()}})

    def negated(self, indicator_id: str) -> "IndicatorCatalog":
        """Copy of the catalog with one indicator's rule logically negated."""
        self.indicator(indicator_id)
        dimensions = []
        for dim in self.dimensions:
            indicators = tuple(
                replace(ind, rule=ind.rule.negated()) if ind.id == indicator_id else ind
                for ind in dim.indicators
            )
            dimensions.append(DimensionDef(dim.name, indicators))
        return replace(self, dimensions=tuple(dimensions))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "parameters": dict(self.parameters),
            "dimensions": [
                {
                    "name": dim.name,
                    "indicators": [
                        {
                            "id": ind.id,
                            "source_columns": list(ind.source_columns),
                            "rule": ind.rule.text,
                            "description": ind.description,
                        }
                        for ind in dim.indicators
                    ],
                }
                for dim in self.dimensions
            ],
        }

    def __len__(self) -> int:
        return len(self.indicators)


def _parse_indicator(raw: Mapping[str, Any], dimension: str, parameters: Mapping[str, float]) -> IndicatorDef:
    if not isinstance(raw, Mapping):
        raise CatalogError(f"indicator entries in {dimension!r} must be objects")
    indicator_id = raw.get("id")
    if not isinstance(indicator_id, str) or not indicator_id.strip():
        raise CatalogError(f"indicator without an id in dimension {dimension!r}")
    if "rule" not in raw:
        raise CatalogError(f"indicator {indicator_id!r} has no rule")
    rule = CutoffRule.parse(str(raw["rule"]))

    if "source_columns" in raw:
        columns = tuple(str(c) for c in raw["source_columns"])
    elif "source_column" in raw:
        columns = (str(raw["source_column"]),)
    else:
        columns = tuple(sorted(rule.fields))
    undeclared = rule.fields - set(columns)
    if undeclared:
        raise CatalogError(
            f"rule of indicator {indicator_id!r} references undeclared column(s) {sorted(undeclared)}"
        )
    unknown_params = rule.parameters - set(parameters)
    if unknown_params:
        raise CatalogError(f"rule of indicator {indicator_id!r} uses unknown parameter(s) {sorted(unknown_params)}")
    return IndicatorDef(indicator_id, columns, rule, str(raw.get("description", "")))


def parse_catalog(config_text: str, parameters: Optional[Mapping[str, float]] = None) -> IndicatorCatalog:
    """
    Parse catalog JSON text into an :class:`IndicatorCatalog`.

    ``parameters`` overrides values declared in the catalog's ``parameters``
    block. Raises :class:`CatalogSyntaxError` for malformed rules and
    :class:`CatalogError` for structural problems.
    """
    try:
        raw = json.loads(config_text)
    except json.JSONDecodeError as e:
        raise CatalogError(f"catalog is not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})") from e
    if not isinstance(raw, Mapping) or not isinstance(raw.get("dimensions"), list):
        raise CatalogError("catalog must be an object with a 'dimensions' list")

    declared = raw.get("parameters") or {}
    if not isinstance(declared, Mapping):
        raise CatalogError("'parameters' must be an object")
    params: Dict[str, float] = {}
    for key, value in declared.items():
        if value is None:
            raise CatalogError(f"parameter {key!r} has no value")
        params[str(key)] = float(value)
    if parameters:
        unknown = set(parameters) - set(params)
        if unknown:
            raise CatalogError(f"unknown catalog parameter(s) {sorted(unknown)}")
        params.update({k: float(v) for k, v in parameters.items()})

    dimensions: List[DimensionDef] = []
    seen_dimensions = set()
    seen_ids = set()
    for raw_dim in raw["dimensions"]:
        if not isinstance(raw_dim, Mapping) or not isinstance(raw_dim.get("name"), str):
            raise CatalogError("every dimension needs a 'name'")
        name = raw_dim["name"]
        if name in seen_dimensions:
            raise CatalogError(f"duplicate dimension {name!r}")
        seen_dimensions.add(name)
        raw_indicators = raw_dim.get("indicators") or []
        if not raw_indicators:
            raise CatalogError(f"dimension {name!r} has no indicators")
        indicators = []
        for raw_ind in raw_indicators:
            indicator = _parse_indicator(raw_ind, name, params)
            if indicator.id in seen_ids:
                raise CatalogError(f"duplicate indicator id {indicator.id!r}")
            seen_ids.add(indicator.id)
            indicators.append(indicator)
        dimensions.append(DimensionDef(name, tuple(indicators)))
    if not dimensions:
        raise CatalogError("catalog has no dimensions")

    catalog = IndicatorCatalog(tuple(dimensions), params, str(raw.get("name", "catalog")))
    overlap = set(catalog.numeric_columns) & set(catalog.categorical_columns)
    if overlap:
        raise CatalogError(f"column(s) {sorted(overlap)} used both as numeric and categorical")
    return catalog


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(path, f"cannot read {path}: {e.strerror or e}") from e


def load_catalog(path: PathLike, parameters: Optional[Mapping[str, float]] = None) -> IndicatorCatalog:
    return parse_catalog(_read_text(path), parameters)


def reference_catalog(parameters: Optional[Mapping[str, float]] = None) -> IndicatorCatalog:
    """
    The shipped 14-dimension, 29-indicator catalog.

    Parameters listed in ``UNCALIBRATED_PARAMETERS`` ship with a placeholder
    value; a warning is logged for each one the caller leaves unset.
    """
    for name in UNCALIBRATED_PARAMETERS:
        if not parameters or name not in parameters:
            log.log_warning(f"catalog parameter {name} not set; using the shipped placeholder",
                            parameter=name, hint=f"--param {name}=<value>")
    text = resources.files("pymicg").joinpath("data").joinpath("reference_catalog.json").read_text(encoding="utf-8")
    return parse_catalog(text, parameters)


@dataclass(frozen=True, eq=False)
class ChildDataset:
    """
    Child records indexed by ``child_id``.

    Catalog numeric columns hold floats (NaN = missing); categorical and other
    columns hold stripped strings (NaN = missing).
    """
    frame: pd.DataFrame
    parse_warnings: int = 0

    @property
    def child_ids(self) -> Tuple[str, ...]:
        return tuple(self.frame.index)

    def records(self) -> List[Dict[str, Any]]:
        out = []
        for child_id, row in self.frame.iterrows():
            record = {"child_id": child_id}
            for key, value in row.items():
                record[key] = None if pd.isna(value) else value
            out.append(record)
        return out

    def to_csv(self) -> str:
        return frame_to_csv(self.frame.reset_index())

    def __len__(self) -> int:
        return len(self.frame)


def _format_cell(value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def frame_to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    columns = [str(c) for c in frame.columns]
    buffer.write(",".join(columns) + "\n")
    for row in frame.itertuples(index=False, name=None):
        buffer.write(",".join(_format_cell(v) for v in row) + "\n")
    return buffer.getvalue()


@stage("ingest_records")
def ingest_records(table: str, catalog: IndicatorCatalog) -> ChildDataset:
    """
    Parse comma-delimited UTF-8 text into a :class:`ChildDataset`.

    Empty cells are missing. Non-empty cells in numeric catalog columns that do
    not parse as finite numbers become missing and increment
    ``parse_warnings``.
    """
    lines = [line for line in table.splitlines() if not line.startswith("#")]
    frame = pd.read_csv(io.StringIO("\n".join(lines)), dtype=str, keep_default_na=False, skipinitialspace=True)
    frame.columns = [str(c).strip() for c in frame.columns]

    needed = list(REQUIRED_COLUMNS) + [c for c in catalog.source_columns if c not in REQUIRED_COLUMNS]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing mandatory column(s): {', '.join(missing)}")

    frame = frame.apply(lambda col: col.str.strip())
    if (frame["child_id"] == "").any():
        raise SchemaError("empty child_id")
    duplicated = frame["child_id"][frame["child_id"].duplicated()].unique()
    if len(duplicated):
        raise SchemaError(f"duplicate child_id(s): {', '.join(map(str, duplicated[:5]))}")

    for column, allowed in (("sex", SEX_VALUES), ("area", AREA_VALUES)):
        frame[column] = frame[column].str.lower()
        bad = sorted(set(frame[column]) - set(allowed) - {""})
        if bad:
            raise SchemaError(f"column {column!r} has unexpected value(s) {bad}; expected {list(allowed)}")

    warnings = 0
    for column in catalog.numeric_columns:
        raw = frame[column]
        parsed = pd.to_numeric(raw, errors="coerce").astype(float)
        bad = (raw != "") & ~np.isfinite(parsed)
        warnings += int(bad.sum())
        frame[column] = parsed.where(np.isfinite(parsed))

    frame = frame.replace("", np.nan)
    frame = frame.set_index("child_id")
    if warnings:
        log.log_warning(f"{warnings} unparseable numeric cell(s) treated as missing", parse_warnings=warnings)
    return ChildDataset(frame, warnings)


def read_records(path: PathLike, catalog: IndicatorCatalog) -> ChildDataset:
    return ingest_records(_read_text(path), catalog)


@dataclass(frozen=True, eq=False)
class DeprivationMatrix:
    """Children x indicators cells in {0, 1, NaN}, columns in catalog order."""
    frame: pd.DataFrame
    policy: str = "exclude_child"
    excluded: Tuple[str, ...] = ()

    @property
    def child_ids(self) -> Tuple[str, ...]:
        return tuple(self.frame.index)

    @property
    def indicator_ids(self) -> Tuple[str, ...]:
        return tuple(self.frame.columns)

    @property
    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float)

    @property
    def has_missing(self) -> bool:
        return bool(self.frame.isna().to_numpy().any())

    def to_csv(self) -> str:
        return frame_to_csv(self.frame.reset_index())

    def __len__(self) -> int:
        return len(self.frame)


def parse_matrix(text: str, policy: str = "exclude_child") -> DeprivationMatrix:
    """Read a matrix written by :meth:`DeprivationMatrix.to_csv`."""
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    frame = pd.read_csv(io.StringIO("\n".join(lines)), dtype={"child_id": str})
    if "child_id" not in frame.columns:
        raise SchemaError("missing mandatory column(s): child_id")
    frame = frame.set_index("child_id").astype(float)
    bad = ~(frame.isna() | frame.isin([0.0, 1.0]))
    if bad.to_numpy().any():
        raise ValidationError("matrix cells must be 0, 1 or empty")
    return DeprivationMatrix(frame, policy)


@stage("code_deprivations")
def code_deprivations(dataset: ChildDataset, catalog: IndicatorCatalog,
                      policy: str = "exclude_child") -> DeprivationMatrix:
    """Evaluate every cutoff rule and apply the missing-data policy."""
    if policy not in MISSING_POLICIES:
        raise ValidationError(f"unknown missing policy {policy!r}; expected one of {list(MISSING_POLICIES)}")
    frame = dataset.frame
    missing = [c for c in catalog.source_columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"dataset lacks catalog column(s): {', '.join(missing)}")

    columns: Dict[str, np.ndarray] = {}
    for column in catalog.numeric_columns:
        columns[column] = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=float)
    for column in catalog.categorical_columns:
        columns[column] = frame[column].to_numpy(dtype=object)

    cells = {ind.id: ind.rule.evaluate(columns, catalog.parameters) for ind in catalog.indicators}
    matrix = pd.DataFrame(cells, index=frame.index, columns=list(catalog.indicator_ids), dtype=float)
    matrix.index.name = "child_id"

    excluded: Tuple[str, ...] = ()
    if policy == "exclude_child":
        incomplete = matrix.isna().any(axis=1)
        excluded = tuple(matrix.index[incomplete])
        matrix = matrix.loc[~incomplete]
        if excluded:
            log.log_info(f"excluded {len(excluded)} child(ren) with missing indicators", excluded=len(excluded))
    elif policy == "treat_nondeprived":
        matrix = matrix.fillna(0.0)

    if matrix.empty:
        raise EmptyMatrixError("every child was excluded; no deprivation matrix left")
    return DeprivationMatrix(matrix, policy, excluded)
