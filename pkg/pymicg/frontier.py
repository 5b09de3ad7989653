"""
Bayesian stochastic frontier for opportunity estimation.

Achievements are mapped to the logit scale, ``y = logit(clamp(A, eps, 1-eps))``,
and modelled as ``y_i = x_i'b + v_i - u_i`` with normal noise ``v`` and an
exponential shortfall ``u >= 0``. A Gibbs sampler with data augmentation draws
``b``, the noise variance, the shortfall rate and every ``u_i``. A child's
opportunity is the inverse-logit of the frontier ``x_i'b + v``.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, special, stats

from pymicg.config import config
from pymicg.data_model import frame_to_csv
from pymicg.exceptions import PreconditionError, RankDeficiencyError, UnknownChildError, ValidationError
from pymicg.setup import Setup
from pymicg.stats import DensityCurve, kde
from pymicg.tracing import log, stage

MIN_CHILDREN = 10

# reference levels are the first entry; the other level becomes a 0/1 dummy
BINARY_COVARIATES = {
    "sex": ("male", "female"),
    "area": ("urban", "rural"),
}


@dataclass(frozen=True)
class FrontierPriors:
    """b ~ N(0, beta_variance I); sigma_v^2 ~ InvGamma(shape, scale); lambda ~ Gamma(shape, rate)."""
    beta_variance: float = 100.0
    sigma_shape: float = 2.0
    sigma_scale: float = 0.1
    lambda_shape: float = 2.0
    lambda_rate: float = 2.0

    def __post_init__(self) -> None:
        for name in ("beta_variance", "sigma_shape", "sigma_scale", "lambda_shape", "lambda_rate"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"prior {name} must be positive")


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    iterations: int = 5000
    burn_in: int = 2000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValidationError("chains must be >= 1")
        if not self.iterations > self.burn_in >= 0:
            raise ValidationError("need iterations > burn_in >= 0")
        if self.thinning < 1:
            raise ValidationError("thinning must be >= 1")
        if self.retained < 4:
            raise ValidationError("fewer than 4 retained draws per chain")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thinning))

    @classmethod
    def from_config(cls, seed: Optional[int] = None, **overrides) -> "McmcConfig":
        values = {
            "chains": config.frontier_chains,
            "iterations": config.frontier_iterations,
            "burn_in": config.frontier_burn_in,
            "thinning": config.frontier_thinning,
            "seed": Setup.resolve_seed(seed),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def build_design(frame: pd.DataFrame, covariates: Sequence[str] = ("sex", "area"),
                 intercept: bool = True) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """
    Design matrix from dataset columns.

    ``sex`` and ``area`` become female/rural dummies; other text columns get
    one dummy per level after the first (sorted); numeric columns enter as-is.
    """
    columns: List[np.ndarray] = []
    names: List[str] = []
    if intercept:
        columns.append(np.ones(len(frame)))
        names.append("intercept")
    for covariate in covariates:
        if covariate not in frame.columns:
            raise ValidationError(f"unknown covariate {covariate!r}")
        values = frame[covariate]
        if values.isna().any():
            raise ValidationError(f"covariate {covariate!r} has missing values")
        if covariate in BINARY_COVARIATES:
            reference, other = BINARY_COVARIATES[covariate]
            columns.append((values == other).to_numpy(dtype=float))
            names.append(f"{covariate}[{other}]")
            continue
        numeric = pd.to_numeric(values, errors="coerce")
        if not numeric.isna().any():
            columns.append(numeric.to_numpy(dtype=float))
            names.append(covariate)
            continue
        levels = sorted(values.astype(str).unique())
        for level in levels[1:]:
            columns.append((values.astype(str) == level).to_numpy(dtype=float))
            names.append(f"{covariate}[{level}]")
    if not columns:
        raise ValidationError("empty design matrix")
    return np.column_stack(columns), tuple(names)


def achievement_to_response(A: np.ndarray, epsilon: Optional[float] = None) -> np.ndarray:
    eps = config.logit_epsilon if epsilon is None else epsilon
    return special.logit(np.clip(A, eps, 1.0 - eps))


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction for draws shaped (chains, draws)."""
    chains = np.asarray(chains, dtype=float)
    half = chains.shape[1] // 2
    if half < 2:
        raise PreconditionError("need at least 4 draws per chain for split R-hat")
    pieces = np.concatenate([chains[:, :half], chains[:, -half:]], axis=0)
    means = pieces.mean(axis=1)
    within = pieces.var(axis=1, ddof=1).mean()
    between = half * means.var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return float(math.sqrt(var_plus / within))


def _run_chain(y: np.ndarray, X: np.ndarray, cfg: McmcConfig, priors: FrontierPriors,
               rng: np.random.Generator) -> Dict[str, np.ndarray]:
    n, p = X.shape
    keep = cfg.retained
    out = {
        "beta": np.empty((keep, p)),
        "sigma2": np.empty(keep),
        "lambda": np.empty(keep),
        "u": np.empty((keep, n)),
        "z": np.empty(keep),
    }
    xtx = X.T @ X
    prior_precision = np.eye(p) / priors.beta_variance

    beta = linalg.lstsq(X, y)[0]
    resid = y - X @ beta
    sigma2 = max(float(resid @ resid) / max(n - p, 1), 1e-6)
    lam = priors.lambda_shape / priors.lambda_rate
    u = np.zeros(n)

    slot = 0
    for iteration in range(cfg.iterations):
        # b | sigma2, u
        precision = xtx / sigma2 + prior_precision
        chol = linalg.cholesky(precision, lower=True)
        mean = linalg.cho_solve((chol, True), X.T @ (y + u) / sigma2)
        beta = mean + linalg.solve_triangular(chol.T, rng.standard_normal(p), lower=False)

        # sigma2 | b, u
        resid = y + u - X @ beta
        shape = priors.sigma_shape + n / 2.0
        scale = priors.sigma_scale + 0.5 * float(resid @ resid)
        sigma2 = scale / rng.gamma(shape)

        # u_i | b, sigma2, lambda: normal truncated at zero
        sigma = math.sqrt(sigma2)
        centre = X @ beta - y - lam * sigma2
        u = stats.truncnorm.rvs(-centre / sigma, np.inf, loc=centre, scale=sigma, random_state=rng)
        u = np.maximum(u, 0.0)

        # lambda | u
        lam = rng.gamma(priors.lambda_shape + n) / (priors.lambda_rate + float(u.sum()))

        if iteration >= cfg.burn_in and (iteration - cfg.burn_in) % cfg.thinning == 0:
            out["beta"][slot] = beta
            out["sigma2"][slot] = sigma2
            out["lambda"][slot] = lam
            out["u"][slot] = u
            out["z"][slot] = rng.standard_normal()
            slot += 1
    return out


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """
    Retained draws with a leading chain axis: ``beta`` (chains, m, p),
    ``sigma2`` and ``lam`` (chains, m), ``u`` (chains, m, n) and the shared
    standard-normal noise ``z`` (chains, m) used for frontier draws.
    """
    child_ids: Tuple[str, ...]
    names: Tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    A: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    z: np.ndarray
    config: McmcConfig
    priors: FrontierPriors = field(default_factory=FrontierPriors)
    rhat: Dict[str, float] = field(default_factory=dict)

    @property
    def n_children(self) -> int:
        return len(self.child_ids)

    @property
    def converged(self) -> bool:
        return all(r <= config.rhat_threshold for r in self.rhat.values())

    def parameter_draws(self) -> Dict[str, np.ndarray]:
        """Scalar parameters as (chains, m) arrays, in export order."""
        params = {name: self.beta[:, :, j] for j, name in enumerate(self.names)}
        params["sigma_v2"] = self.sigma2
        params["lambda"] = self.lam
        return params

    def index_of(self, child_id: str) -> int:
        try:
            return self.child_ids.index(child_id)
        except ValueError:
            raise UnknownChildError(f"child {child_id!r} is not in the fitted set") from None

    def shortfall_means(self) -> np.ndarray:
        return self.u.mean(axis=(0, 1))

    def opportunity_draws(self, predictive: bool = False) -> np.ndarray:
        """
        Opportunity draws shaped (n, chains * m): inverse-logit of
        ``x'b + sigma z`` or, with ``predictive``, of ``x'b + sigma z - u``.
        Children with identical covariate rows share frontier draws.
        """
        beta = self.beta.reshape(-1, self.beta.shape[-1])
        noise = (np.sqrt(self.sigma2) * self.z).reshape(-1)
        rows, inverse = np.unique(self.X, axis=0, return_inverse=True)
        eta = (rows @ beta.T + noise[None, :])[np.asarray(inverse).reshape(-1)]
        if predictive:
            eta = eta - self.u.reshape(-1, self.n_children).T
        return special.expit(eta)

    def to_csv(self, include_shortfall: bool = False) -> str:
        """Long-format export: iteration, chain, parameter, value."""
        lines = ["iteration,chain,parameter,value"]
        iterations = list(range(self.config.burn_in, self.config.iterations, self.config.thinning))
        params = self.parameter_draws()
        for chain in range(self.beta.shape[0]):
            for slot, iteration in enumerate(iterations):
                for name, draws in params.items():
                    lines.append(f"{iteration + 1},{chain + 1},{name},{float(draws[chain, slot])!r}")
                if include_shortfall:
                    for i, child_id in enumerate(self.child_ids):
                        lines.append(f"{iteration + 1},{chain + 1},u[{child_id}],{float(self.u[chain, slot, i])!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> pd.DataFrame:
        rows = []
        for name, draws in self.parameter_draws().items():
            flat = draws.reshape(-1)
            q025, q975 = np.quantile(flat, [0.025, 0.975])
            rows.append((name, float(flat.mean()), float(flat.std(ddof=1)), float(q025), float(q975),
                         self.rhat.get(name, float("nan"))))
        return pd.DataFrame(rows, columns=["parameter", "mean", "sd", "q025", "q975", "rhat"])


@stage("fit_frontier")
def fit_frontier(A, X, cfg: Optional[McmcConfig] = None, priors: Optional[FrontierPriors] = None,
                 child_ids: Optional[Sequence[str]] = None, names: Optional[Sequence[str]] = None,
                 parallel: bool = True) -> PosteriorDraws:
    """
    Run ``cfg.chains`` independent Gibbs chains seeded from
    ``SeedSequence(cfg.seed).spawn``. Draws are identical whether chains run
    in a thread pool or sequentially.
    """
    cfg = cfg or McmcConfig.from_config()
    priors = priors or FrontierPriors()
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(A)
    if n < MIN_CHILDREN:
        raise PreconditionError(f"frontier needs at least {MIN_CHILDREN} children, got {n}")
    if X.shape[0] != n:
        raise ValidationError(f"design has {X.shape[0]} rows for {n} achievements")
    if not np.all(np.isfinite(A)) or A.min() < 0 or A.max() > 1:
        raise ValidationError("achievements must be finite values in [0, 1]")
    if not np.all(np.isfinite(X)):
        raise ValidationError("design matrix has non-finite entries")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError(f"design matrix of shape {X.shape} is rank deficient")
    child_ids = tuple(child_ids) if child_ids is not None else tuple(f"c{i + 1:04d}" for i in range(n))
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    if len(child_ids) != n or len(set(child_ids)) != n:
        raise ValidationError("child ids must be unique and match the achievements")

    y = achievement_to_response(A)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.chains)]
    if parallel and cfg.chains > 1:
        with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
            results = list(pool.map(lambda rng: _run_chain(y, X, cfg, priors, rng), rngs))
    else:
        results = [_run_chain(y, X, cfg, priors, rng) for rng in rngs]

    draws = PosteriorDraws(
        child_ids=child_ids,
        names=names,
        X=X,
        y=y,
        A=A,
        beta=np.stack([r["beta"] for r in results]),
        sigma2=np.stack([r["sigma2"] for r in results]),
        lam=np.stack([r["lambda"] for r in results]),
        u=np.stack([r["u"] for r in results]),
        z=np.stack([r["z"] for r in results]),
        config=cfg,
        priors=priors,
    )
    rhat = {name: split_rhat(values) for name, values in draws.parameter_draws().items()}
    draws.rhat.update(rhat)
    worst = max(rhat.values())
    if worst > config.rhat_threshold:
        log.log_warning(
            f"split R-hat {worst:.3f} above {config.rhat_threshold}; chains may not have converged",
            rhat={k: round(v, 4) for k, v in rhat.items()},
        )
    return draws


def opportunity_distribution(draws: PosteriorDraws, child_id: str, predictive: bool = False,
                             bandwidth: Optional[float] = None) -> DensityCurve:
    """Density of one child's opportunity draws on [0, 1]."""
    i = draws.index_of(child_id)
    return kde(draws.opportunity_draws(predictive)[i], bandwidth=bandwidth)


@dataclass(frozen=True)
class OpportunityProfile:
    child_id: str
    achievement: float
    mean: float
    q05: float
    q95: float
    Eu: float
    rank: int


def left_behind(draws: PosteriorDraws, achievements: Optional[Sequence[float]] = None,
                predictive: bool = False) -> List[OpportunityProfile]:
    """
    Children ordered by left-behind risk: ascending posterior mean
    opportunity, then higher posterior mean shortfall, then child_id.
    """
    achievements = draws.A if achievements is None else np.asarray(achievements, dtype=float)
    samples = draws.opportunity_draws(predictive)
    means = samples.mean(axis=1)
    q05, q95 = np.quantile(samples, [0.05, 0.95], axis=1)
    # ulp-level ties from constant rows are not reordering
    tol = 1e-12 * np.maximum(1.0, np.abs(means))
    disordered = np.flatnonzero((q05 > means + tol) | (means > q95 + tol))
    if disordered.size:
        ids = [draws.child_ids[i] for i in disordered[:5]]
        raise PreconditionError(
            f"posterior mean outside the 5-95% band for {disordered.size} children (e.g. {ids}); "
            "opportunity draws are too skewed to summarise"
        )
    shortfall = draws.shortfall_means()
    order = sorted(range(draws.n_children), key=lambda i: (means[i], -shortfall[i], draws.child_ids[i]))
    profiles = []
    for rank, i in enumerate(order, start=1):
        profiles.append(OpportunityProfile(
            draws.child_ids[i], float(achievements[i]), float(means[i]),
            float(q05[i]), float(q95[i]), float(shortfall[i]), rank,
        ))
    return profiles


def bottom_share(profiles: Sequence[OpportunityProfile], q: float) -> List[OpportunityProfile]:
    """The ``q`` percent of children with the highest risk (at least one)."""
    if not 0 < q < 100:
        raise ValidationError(f"q must lie in (0, 100), got {q}")
    count = max(1, math.ceil(len(profiles) * q / 100.0 - 1e-9))
    return sorted(profiles, key=lambda p: p.rank)[:count]


def profiles_to_csv(profiles: Sequence[OpportunityProfile]) -> str:
    frame = pd.DataFrame(
        [(p.child_id, p.achievement, p.mean, p.q05, p.q95, p.Eu, p.rank) for p in profiles],
        columns=["child_id", "achievement", "mean", "q05", "q95", "Eu", "rank"],
    )
    return frame_to_csv(frame)
