"""
Geometric dynamics of the developmental ecology.

Fixed-step RK4 for the rotationally coupled system of micro/meso/macro
potentials, its chronosystem modulation ``dPsi/dt = Phi(Psi) + kappa(t) Psi``,
the hyperbolic embedding and Lorentzian interval, geodesics of a metric field
and the time-weighted ecological potential.
"""
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pymicg.data_model import frame_to_csv
from pymicg.exceptions import BlowUpError, SingularMetricError, ValidationError
from pymicg.rules import NumericExpression

Rhs = Callable[[float, np.ndarray], np.ndarray]
RateFunction = Union[float, Callable[[float], float]]

LORENTZIAN = np.diag([1.0, 1.0, -1.0])
DETERMINANT_FLOOR = 1e-12
DIFFERENCE_STEP = 1e-5
COORDINATE_NAMES = ("x", "y", "z", "w")


@dataclass(frozen=True)
class CurvatureParams:
    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.phi1, self.phi2, self.phi3)):
            raise ValidationError("curvature coefficients must be finite")

    def fixed_points(self) -> List[Tuple[float, float, float]]:
        """Origin plus the symmetric pair (+-sqrt(phi3 (phi2 - 1)), ..., phi2 - 1) when real."""
        if self.phi3 == 0:
            raise ValidationError("fixed-point formulas need phi3 != 0")
        points = [(0.0, 0.0, 0.0)]
        radicand = self.phi3 * (self.phi2 - 1.0)
        if radicand > 0:
            root = math.sqrt(radicand)
            points.append((root, root, self.phi2 - 1.0))
            points.append((-root, -root, self.phi2 - 1.0))
        return points


PRESETS: Dict[str, CurvatureParams] = {
    "chaotic": CurvatureParams(10.0, 28.0, 8.0 / 3.0),
}


def curvature_preset(name: str) -> CurvatureParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown curvature preset {name!r}; expected one of {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class CoupledState:
    f_x: float
    f_y: float
    f_z: float
    t: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.f_x, self.f_y, self.f_z, self.t)):
            raise ValidationError("state components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.f_x, self.f_y, self.f_z], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples at ``times`` (uniform step ``h``); ``states`` has one row per time."""
    times: np.ndarray
    states: np.ndarray
    h: float
    names: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.names.index(name)]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(self.names))
        frame.insert(0, "t", self.times)
        return frame

    def to_csv(self) -> str:
        return frame_to_csv(self.to_frame())


def rk4(rhs: Rhs, y0: Sequence[float], h: float, T: float, t0: float = 0.0,
        names: Optional[Sequence[str]] = None) -> Trajectory:
    """Classical fourth-order Runge-Kutta with ``round(T / h)`` fixed steps."""
    if not (h > 0 and math.isfinite(h)):
        raise ValidationError(f"step size must be positive, got {h}")
    if not (T > 0 and math.isfinite(T)):
        raise ValidationError(f"horizon must be positive, got {T}")
    steps = max(1, int(round(T / h)))
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise BlowUpError(t0, "initial state is not finite")
    states = np.empty((steps + 1, len(y)))
    times = t0 + h * np.arange(steps + 1)
    states[0] = y
    half = 0.5 * h
    for step in range(steps):
        t = times[step]
        k1 = rhs(t, y)
        k2 = rhs(t + half, y + half * k1)
        k3 = rhs(t + half, y + half * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise BlowUpError(float(times[step + 1]))
        states[step + 1] = y
    names = tuple(names) if names is not None else tuple(f"s{i}" for i in range(len(y)))
    return Trajectory(times, states, h, names)


def coupled_rhs(params: CurvatureParams, state: np.ndarray) -> np.ndarray:
    f_x, f_y, f_z = state
    return np.array([
        params.phi1 * (f_y - f_x),
        f_x * (params.phi2 - f_z) - f_y,
        f_x * f_y - params.phi3 * f_z,
    ])


def integrate_coupled(params: CurvatureParams, f0: CoupledState, h: float, T: float) -> Trajectory:
    return rk4(lambda t, y: coupled_rhs(params, y), f0.as_array(), h, T, t0=f0.t, names=("f_x", "f_y", "f_z"))


def _rate(kappa: RateFunction) -> Callable[[float], float]:
    if callable(kappa):
        return kappa
    value = float(kappa)
    return lambda t: value


def chronosystem_modulate(params: Optional[CurvatureParams], kappa: RateFunction, psi0: Union[CoupledState, Sequence[float]],
                          h: float, T: float) -> Trajectory:
    """
    Integrate ``dPsi/dt = Phi(Psi) + kappa(t) Psi``. ``params=None`` means
    ``Phi = 0``. Where ``kappa(t) == 0`` the step equals the unmodulated one.
    """
    rate = _rate(kappa)
    if isinstance(psi0, CoupledState):
        start, t0 = psi0.as_array(), psi0.t
    else:
        start, t0 = np.asarray(psi0, dtype=float), 0.0

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        base = coupled_rhs(params, y) if params is not None else np.zeros_like(y)
        k = rate(t)
        if k:
            return base + k * y
        return base

    names = ("f_x", "f_y", "f_z") if len(start) == 3 else None
    return rk4(rhs, start, h, T, t0=t0, names=names)


def hyperbolic_embed(r, u, v):
    """(r, u, v) -> (sinh r sin v cos u, sinh r sin v sin u, cosh r)."""
    r, u, v = np.asarray(r, dtype=float), np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    x = np.sinh(r) * np.sin(v) * np.cos(u)
    y = np.sinh(r) * np.sin(v) * np.sin(u)
    z = np.cosh(r)
    if x.ndim == 0:
        return float(x), float(y), float(z)
    return x, y, z


def interval(curve: Union[Trajectory, np.ndarray]) -> np.ndarray:
    """dx^2 + dy^2 - dz^2 between consecutive samples of the first three coordinates."""
    points = curve.states if isinstance(curve, Trajectory) else np.asarray(curve, dtype=float)
    if points.ndim != 2 or points.shape[0] < 2 or points.shape[1] < 3:
        raise ValidationError("interval needs at least 2 samples of 3 coordinates")
    delta = np.diff(points[:, :3], axis=0)
    return np.einsum("ni,ij,nj->n", delta, LORENTZIAN, delta)


class MetricField:
    """
    A metric tensor field ``point -> g``. ``constant`` marks metrics whose
    Christoffel symbols vanish identically.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int, constant: bool = False,
                 name: str = "custom") -> None:
        self.func = func
        self.dim = dim
        self.constant = constant
        self.name = name

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        g = np.asarray(self.func(np.asarray(point, dtype=float)), dtype=float)
        if g.shape != (self.dim, self.dim):
            raise ValidationError(f"metric returned shape {g.shape}, expected {(self.dim, self.dim)}")
        if not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(g).max()))):
            raise ValidationError("metric is not symmetric")
        return g

    def inverse(self, point: Sequence[float]) -> np.ndarray:
        g = self(point)
        if abs(np.linalg.det(g)) < DETERMINANT_FLOOR:
            raise SingularMetricError(f"metric {self.name!r} is singular at {np.asarray(point).tolist()}")
        return np.linalg.inv(g)

    def christoffel(self, point: Sequence[float]) -> np.ndarray:
        """Gamma[k, i, j] from central differences of g with step 1e-5 max(1, |x_l|)."""
        x = np.asarray(point, dtype=float)
        g_inv = self.inverse(x)
        if self.constant:
            return np.zeros((self.dim,) * 3)
        dg = np.empty((self.dim,) * 3)
        for l in range(self.dim):
            step = DIFFERENCE_STEP * max(1.0, abs(x[l]))
            offset = np.zeros(self.dim)
            offset[l] = step
            dg[l] = (self(x + offset) - self(x - offset)) / (2.0 * step)
        # dg[l, i, j] = d_l g_ij
        lowered = np.transpose(dg, (1, 0, 2)) + np.transpose(dg, (1, 2, 0)) - dg
        return 0.5 * np.einsum("kl,lij->kij", g_inv, lowered)


def minkowski_metric() -> MetricField:
    return MetricField(lambda p: LORENTZIAN, 3, constant=True, name="minkowski")


def poincare_half_plane_metric() -> MetricField:
    def g(p: np.ndarray) -> np.ndarray:
        return np.eye(2) / (p[1] * p[1])

    return MetricField(g, 2, name="poincare-half-plane")


def _embedding_jacobian(p: np.ndarray) -> np.ndarray:
    r, u, v = p
    sh, ch = math.sinh(r), math.cosh(r)
    su, cu = math.sin(u), math.cos(u)
    sv, cv = math.sin(v), math.cos(v)
    return np.array([
        [ch * sv * cu, -sh * sv * su, sh * cv * cu],
        [ch * sv * su, sh * sv * cu, sh * cv * su],
        [sh, 0.0, 0.0],
    ])


def hyperbolic_embedding_metric() -> MetricField:
    """Pull-back of the Lorentzian form through the hyperbolic embedding, on (r, u, v)."""
    def g(p: np.ndarray) -> np.ndarray:
        jac = _embedding_jacobian(p)
        return jac.T @ LORENTZIAN @ jac

    return MetricField(g, 3, name="hyperbolic-embedding")


def custom_metric(entries: Sequence[Sequence[str]], variables: Optional[Sequence[str]] = None) -> MetricField:
    """
    Metric from expression strings, e.g. ``[["1/y^2", "0"], ["0", "1/y^2"]]``.
    Variables default to x, y, z, w for the coordinates in order.
    """
    dim = len(entries)
    if dim == 0 or any(len(row) != dim for row in entries):
        raise ValidationError("custom metric must be a square table of expressions")
    if variables is None:
        if dim > len(COORDINATE_NAMES):
            raise ValidationError(f"name the coordinates of a {dim}-dimensional metric explicitly")
        variables = COORDINATE_NAMES[:dim]
    variables = tuple(variables)
    expressions = [[NumericExpression(str(cell), variables) for cell in row] for row in entries]
    constant = all(not expr.variables for row in expressions for expr in row)

    def g(p: np.ndarray) -> np.ndarray:
        values = dict(zip(variables, (float(c) for c in p)))
        return np.array([[expr(**values) for expr in row] for row in expressions])

    return MetricField(g, dim, constant=constant, name="custom")


METRIC_PRESETS: Dict[str, Callable[[], MetricField]] = {
    "minkowski": minkowski_metric,
    "poincare-half-plane": poincare_half_plane_metric,
    "hyperbolic-embedding": hyperbolic_embedding_metric,
}


def metric_preset(name: str) -> MetricField:
    try:
        return METRIC_PRESETS[name]()
    except KeyError:
        raise ValidationError(f"unknown metric {name!r}; expected one of {sorted(METRIC_PRESETS)} or custom") from None


def geodesic(metric: MetricField, x0: Sequence[float], v0: Sequence[float], h: float, T: float) -> Trajectory:
    """
    Affinely parameterised geodesic: RK4 on ``(x, xdot)`` with
    ``xddot^k = -Gamma^k_ij xdot^i xdot^j``.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if x0.shape != (metric.dim,) or v0.shape != (metric.dim,):
        raise ValidationError(f"position and velocity must have {metric.dim} components")
    dim = metric.dim

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        position, velocity = state[:dim], state[dim:]
        gamma = metric.christoffel(position)
        acceleration = -np.einsum("kij,i,j->k", gamma, velocity, velocity)
        return np.concatenate([velocity, acceleration])

    names = COORDINATE_NAMES[:dim] if dim <= len(COORDINATE_NAMES) else tuple(f"x{i}" for i in range(dim))
    names = tuple(names) + tuple(f"d{n}" for n in names)
    return rk4(rhs, np.concatenate([x0, v0]), h, T, names=names)


def speed(metric: MetricField, trajectory: Trajectory) -> np.ndarray:
    """g_ij xdot^i xdot^j at every sample of a geodesic trajectory."""
    dim = metric.dim
    return np.array([
        float(state[dim:] @ metric(state[:dim]) @ state[dim:]) for state in trajectory.states
    ])


@dataclass(frozen=True)
class PotentialField:
    """E(point, t) = sum_i couplings[i](t) * components[i](point)."""
    components: Tuple[Callable[[np.ndarray], float], ...]
    couplings: Tuple[RateFunction, ...]

    def __post_init__(self) -> None:
        if len(self.components) != len(self.couplings):
            raise ValidationError(
                f"{len(self.components)} component field(s) for {len(self.couplings)} coupling(s)"
            )


def potential(field: PotentialField, point: Sequence[float], t: float) -> float:
    p = np.asarray(point, dtype=float)
    return math.fsum(_rate(coupling)(t) * float(component(p))
                     for component, coupling in zip(field.components, field.couplings))
