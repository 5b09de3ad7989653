"""OLS and linear-programming quantile regression."""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize

from pymicg.data_model import frame_to_csv
from pymicg.exceptions import InfeasibleProgramError, PreconditionError, RankDeficiencyError, ValidationError
from pymicg.tracing import stage


@dataclass(frozen=True, eq=False)
class RegressionFit:
    terms: Tuple[str, ...]
    coefficients: np.ndarray
    se: Optional[np.ndarray] = None
    residual_variance: Optional[float] = None
    tau: Optional[float] = None
    objective: Optional[float] = None

    def __getitem__(self, term: str) -> float:
        return float(self.coefficients[self.terms.index(term)])

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"term": list(self.terms), "estimate": self.coefficients})
        if self.se is not None:
            frame["se"] = self.se
        if self.tau is not None:
            frame["tau"] = self.tau
        return frame

    def to_csv(self) -> str:
        return frame_to_csv(self.to_frame())


def _prepare(y, X, terms: Optional[Sequence[str]]) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if len(y) != n:
        raise ValidationError(f"response has {len(y)} rows, design has {n}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValidationError("regression inputs must be finite")
    if n <= p:
        raise PreconditionError(f"need more observations than terms (n={n}, p={p})")
    terms = tuple(terms) if terms is not None else tuple(f"x{j}" for j in range(p))
    if len(terms) != p:
        raise ValidationError(f"{len(terms)} term names for {p} design columns")
    return y, X, terms


def pinball_loss(residuals, tau: float) -> float:
    """Total check loss sum r (tau - 1[r < 0])."""
    r = np.asarray(residuals, dtype=float)
    return math.fsum(r * (tau - (r < 0)))


@stage("ols_fit")
def ols_fit(y, X, terms: Optional[Sequence[str]] = None) -> RegressionFit:
    """Least squares through a QR factorization; SEs from (X'X)^-1 s^2."""
    y, X, terms = _prepare(y, X, terms)
    n, p = X.shape
    q, r = linalg.qr(X, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficiencyError(f"design matrix of shape {X.shape} is rank deficient")
    beta = linalg.solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = math.fsum(resid * resid) / (n - p)
    r_inv = linalg.solve_triangular(r, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(r_inv * r_inv, axis=1))
    return RegressionFit(terms, beta, se, sigma2)


@stage("quantile_fit")
def quantile_fit(y, X, tau: float, terms: Optional[Sequence[str]] = None) -> RegressionFit:
    """
    Minimize sum rho_tau(y - Xb) as the primal LP

        min tau 1'u+ + (1 - tau) 1'u-   s.t.  Xb + u+ - u- = y,  u+, u- >= 0

    with HiGHS dual simplex, which returns a basic (vertex) solution.
    """
    y, X, terms = _prepare(y, X, terms)
    if not 0 < tau < 1:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError(f"design matrix of shape {X.shape} is rank deficient")
    n, p = X.shape
    cost = np.concatenate([np.zeros(p), np.full(n, tau), np.full(n, 1.0 - tau)])
    eye = np.eye(n)
    equality = np.hstack([X, eye, -eye])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    result = optimize.linprog(cost, A_eq=equality, b_eq=y, bounds=bounds, method="highs-ds")
    if result.status != 0:
        raise InfeasibleProgramError(f"quantile program failed at tau={tau}: {result.message}")
    beta = np.asarray(result.x[:p], dtype=float)
    return RegressionFit(terms, beta, tau=float(tau), objective=pinball_loss(y - X @ beta, tau))


def quantile_fits(y, X, taus: Sequence[float], terms: Optional[Sequence[str]] = None) -> List[RegressionFit]:
    return [quantile_fit(y, X, tau, terms) for tau in taus]


def fits_to_csv(fits: Sequence[RegressionFit]) -> str:
    """Stack several fits; missing se/tau cells stay empty."""
    frames = [fit.to_frame() for fit in fits]
    frame = pd.concat(frames, ignore_index=True, sort=False)
    columns = ["term", "estimate"] + [c for c in ("se", "tau") if c in frame.columns]
    return frame_to_csv(frame[columns])


def design_from_columns(frame: pd.DataFrame, response: str, columns: Sequence[str],
                        intercept: bool = True) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    """
    Response vector and design from a column list. Text columns expand into
    dummies for every level after the first (sorted). Rows with any missing
    value are dropped.
    """
    needed = [response] + list(columns)
    unknown = [c for c in needed if c not in frame.columns]
    if unknown:
        raise ValidationError(f"unknown column(s): {unknown}")
    data = frame[needed].dropna()
    if data.empty:
        raise PreconditionError("no complete rows for the regression")
    parts = []
    names: List[str] = []
    if intercept:
        parts.append(np.ones(len(data)))
        names.append("intercept")
    for column in columns:
        numeric = pd.to_numeric(data[column], errors="coerce")
        if not numeric.isna().any():
            parts.append(numeric.to_numpy(dtype=float))
            names.append(column)
            continue
        values = data[column].astype(str)
        for level in sorted(values.unique())[1:]:
            parts.append((values == level).to_numpy(dtype=float))
            names.append(f"{column}[{level}]")
    y = pd.to_numeric(data[response], errors="coerce").to_numpy(dtype=float)
    if np.isnan(y).any():
        raise ValidationError(f"response {response!r} is not numeric")
    return y, np.column_stack(parts), tuple(names)
