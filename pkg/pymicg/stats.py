"""Robustness analytics: Spearman concordance across weighting schemes and boundary-corrected KDE."""
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate, stats

from pymicg.config import config
from pymicg.data_model import frame_to_csv
from pymicg.exceptions import DegenerateDataError, PreconditionError, ValidationError

Vector = Union[Sequence[float], np.ndarray, pd.Series]


def _as_vector(values: Vector, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains missing or non-finite values")
    return array


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - math.fsum(x) / len(x)
    dy = y - math.fsum(y) / len(y)
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx == 0 or syy == 0:
        raise DegenerateDataError("rank correlation is undefined for a constant vector")
    rho = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def spearman(a: Vector, b: Vector) -> float:
    """Pearson correlation of average-tie ranks."""
    x = _as_vector(a, "a")
    y = _as_vector(b, "b")
    if len(x) != len(y):
        raise ValidationError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise PreconditionError("spearman needs at least 3 observations")
    return _pearson(stats.rankdata(x, method="average"), stats.rankdata(y, method="average"))


@dataclass(frozen=True, eq=False)
class ConcordanceMatrix:
    labels: Tuple[str, ...]
    matrix: np.ndarray

    def __getitem__(self, pair: Tuple[str, str]) -> float:
        i = self.labels.index(pair[0])
        j = self.labels.index(pair[1])
        return float(self.matrix[i, j])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, index=list(self.labels), columns=list(self.labels))

    def to_csv(self) -> str:
        frame = self.to_frame()
        frame.index.name = "scheme"
        return frame_to_csv(frame.reset_index())


def concordance(schemes: Mapping[str, Vector]) -> ConcordanceMatrix:
    """Pairwise Spearman matrix over aligned score vectors (Series are aligned on their index)."""
    if not schemes:
        raise ValidationError("no schemes to compare")
    labels = tuple(schemes)
    vectors = list(schemes.values())
    if all(isinstance(v, pd.Series) for v in vectors):
        index = vectors[0].index
        for label, v in zip(labels, vectors):
            if set(v.index) != set(index):
                raise ValidationError(f"scheme {label!r} covers a different set of children")
        vectors = [v.reindex(index) for v in vectors]
    arrays = [_as_vector(v, label) for label, v in zip(labels, vectors)]
    if len({len(a) for a in arrays}) != 1:
        raise ValidationError("scheme vectors differ in length")
    size = len(labels)
    matrix = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            matrix[i, j] = matrix[j, i] = spearman(arrays[i], arrays[j])
    return ConcordanceMatrix(labels, matrix)


@dataclass(frozen=True, eq=False)
class DensityCurve:
    grid: np.ndarray
    heights: np.ndarray
    bandwidth: float
    median: Optional[float] = None

    def integral(self) -> float:
        return float(integrate.trapezoid(self.heights, self.grid))

    def evaluate(self, x: Vector) -> np.ndarray:
        """Linear interpolation on the grid; zero outside [0, 1]."""
        points = np.asarray(x, dtype=float)
        return np.interp(points, self.grid, self.heights, left=0.0, right=0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid, "density": self.heights})

    def to_csv(self) -> str:
        return frame_to_csv(self.to_frame())


def silverman_bandwidth(values: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), falling back to sd when the IQR is zero."""
    sd = float(np.std(values, ddof=1))
    if sd == 0:
        raise DegenerateDataError("all values are identical; bandwidth would be zero")
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * len(values) ** (-0.2)


def kde(values: Vector, bandwidth: Optional[float] = None, grid_points: Optional[int] = None,
        with_median: bool = True) -> DensityCurve:
    """
    Gaussian kernel density on [0, 1] with reflection at both boundaries,
    evaluated on a uniform grid and rescaled so the trapezoid integral is one.
    """
    points = _as_vector(values, "values")
    if len(points) < 2:
        raise PreconditionError("kde needs at least 2 values")
    if points.min() < 0 or points.max() > 1:
        raise ValidationError("kde values must lie in [0, 1]")
    if bandwidth is None:
        h = silverman_bandwidth(points)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    grid_points = config.kde_grid_points if grid_points is None else int(grid_points)
    grid = np.linspace(0.0, 1.0, grid_points)
    mirrored = np.concatenate([points, -points, 2.0 - points])
    heights = stats.norm.pdf((grid[:, None] - mirrored[None, :]) / h).sum(axis=1) / (len(points) * h)
    area = integrate.trapezoid(heights, grid)
    if not area > 0:
        raise DegenerateDataError("density vanished on the grid")
    heights = heights / area
    median = float(np.median(points)) if with_median else None
    return DensityCurve(grid, heights, h, median)
