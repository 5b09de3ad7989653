import math

import numpy as np
import pytest

from pymicg.ecodyn import (
    CoupledState,
    CurvatureParams,
    MetricField,
    PotentialField,
    chronosystem_modulate,
    coupled_rhs,
    curvature_preset,
    custom_metric,
    geodesic,
    hyperbolic_embed,
    integrate_coupled,
    interval,
    metric_preset,
    minkowski_metric,
    poincare_half_plane_metric,
    potential,
    rk4,
    speed,
)
from pymicg.exceptions import BlowUpError, SingularMetricError, ValidationError


def test_fixed_point_residual():
    params = curvature_preset("chaotic")
    points = params.fixed_points()
    assert points[0] == (0.0, 0.0, 0.0)
    assert points[1] == pytest.approx((math.sqrt(72), math.sqrt(72), 27.0))
    for point in points:
        assert np.linalg.norm(coupled_rhs(params, np.array(point))) < 1e-9


def test_fixed_point_is_stationary_under_integration():
    params = curvature_preset("chaotic")
    start = params.fixed_points()[1]
    trajectory = integrate_coupled(params, CoupledState(*start), h=0.001, T=0.1)
    assert len(trajectory) == 101
    assert np.max(np.abs(trajectory.states - np.array(start))) < 1e-3
    assert trajectory.times[-1] == pytest.approx(0.1)


def test_fixed_points_need_nonzero_phi3():
    with pytest.raises(ValidationError):
        CurvatureParams(1.0, 2.0, 0.0).fixed_points()
    assert CurvatureParams(1.0, 0.5, 1.0).fixed_points() == [(0.0, 0.0, 0.0)]
    with pytest.raises(ValidationError):
        curvature_preset("calm")


def test_rk4_fourth_order_convergence():
    params = curvature_preset("chaotic")
    start = CoupledState(1.0, 1.0, 1.0)
    reference = integrate_coupled(params, start, h=0.001, T=1.0).final
    coarse = np.linalg.norm(integrate_coupled(params, start, h=0.004, T=1.0).final - reference)
    fine = np.linalg.norm(integrate_coupled(params, start, h=0.002, T=1.0).final - reference)
    order = math.log2(coarse / fine)
    assert 3.5 <= order <= 4.5


def test_rk4_exponential_decay():
    trajectory = rk4(lambda t, y: -y, [1.0], h=0.01, T=1.0)
    assert trajectory.final[0] == pytest.approx(math.exp(-1.0), rel=1e-9)
    assert trajectory.names == ("s0",)


def test_rk4_validation_and_blow_up():
    for h, T in ((0.0, 1.0), (0.1, -1.0), (math.nan, 1.0)):
        with pytest.raises(ValidationError):
            rk4(lambda t, y: y, [1.0], h=h, T=T)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(BlowUpError) as info:
            rk4(lambda t, y: y * y, [1.0], h=0.01, T=3.0)
    assert info.value.time > 0.9


def test_chronosystem_closed_form():
    psi0 = np.array([1.0, -2.0, 0.5])
    trajectory = chronosystem_modulate(None, math.sin, psi0, h=0.001, T=2.0)
    growth = np.exp(1.0 - np.cos(trajectory.times))
    assert np.allclose(trajectory.states, psi0[None, :] * growth[:, None], rtol=1e-9)


def test_chronosystem_zero_rate_equals_coupled_system():
    params = curvature_preset("chaotic")
    start = CoupledState(1.0, 2.0, 3.0)
    plain = integrate_coupled(params, start, h=0.01, T=0.5)
    modulated = chronosystem_modulate(params, 0.0, start, h=0.01, T=0.5)
    assert np.array_equal(plain.states, modulated.states)
    assert modulated.names == ("f_x", "f_y", "f_z")


def test_trajectory_csv_header():
    trajectory = integrate_coupled(curvature_preset("chaotic"), CoupledState(1.0, 1.0, 1.0), h=0.1, T=0.2)
    lines = trajectory.to_csv().splitlines()
    assert lines[0] == "t,f_x,f_y,f_z"
    assert lines[1] == "0,1,1,1"
    assert len(lines) == 4


def test_hyperbolic_embedding_lies_on_unit_hyperboloid_at_equator():
    x, y, z = hyperbolic_embed(0.7, 0.3, math.pi / 2)
    assert z * z - x * x - y * y == pytest.approx(1.0, abs=1e-12)
    xs, ys, zs = hyperbolic_embed(np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    assert zs.tolist() == pytest.approx([1.0, math.cosh(1.0)])


@pytest.mark.parametrize("v", [0.3, 1.0, 2.2, -0.8])
def test_hyperbolic_embedding_identity_at_general_polar_angle(v):
    r = np.linspace(0.0, 2.0, 9)
    for u in (0.0, 0.4, 3.0):
        x, y, z = hyperbolic_embed(r, np.full_like(r, u), np.full_like(r, v))
        assert np.allclose(z ** 2 - (x ** 2 + y ** 2) / math.sin(v) ** 2, 1.0, rtol=0, atol=1e-12)
        shifted = hyperbolic_embed(r, np.full_like(r, u + 2 * math.pi), np.full_like(r, v))
        assert np.allclose(np.stack(shifted), np.stack((x, y, z)), rtol=0, atol=1e-12)
    assert hyperbolic_embed(0.0, 1.3, v) == pytest.approx((0.0, 0.0, 1.0))


@pytest.mark.parametrize("v", [0.3, math.pi / 2])
def test_interval_along_radial_path_matches_induced_metric(v):
    r, dr = 1.0, 1e-4
    curve = np.array([hyperbolic_embed(r, 0.4, v), hyperbolic_embed(r + dr, 0.4, v)])
    expected = (math.cosh(r) ** 2 * math.sin(v) ** 2 - math.sinh(r) ** 2) * dr * dr
    assert interval(curve)[0] == pytest.approx(expected, rel=1e-3)


def test_interval_signs():
    curve = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [2.0, 0.0, 2.0]])
    assert interval(curve).tolist() == [1.0, -1.0, 0.0]
    with pytest.raises(ValidationError):
        interval(np.zeros((1, 3)))


def test_flat_geodesic_is_straight_line():
    trajectory = geodesic(minkowski_metric(), [0.0, 1.0, -1.0], [1.0, 2.0, 3.0], h=0.01, T=5.0)
    expected = np.array([0.0, 1.0, -1.0])[None, :] + trajectory.times[:, None] * np.array([1.0, 2.0, 3.0])[None, :]
    assert np.max(np.abs(trajectory.states[:, :3] - expected)) < 1e-9
    assert trajectory.names == ("x", "y", "z", "dx", "dy", "dz")


def test_custom_metric_christoffel_matches_half_plane_formulas():
    metric = custom_metric([["1/y^2", "0"], ["0", "1/y^2"]])
    gamma = metric.christoffel([0.3, 2.0])
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 1] = expected[0, 1, 0] = -0.5
    expected[1, 0, 0] = 0.5
    expected[1, 1, 1] = -0.5
    assert np.allclose(gamma, expected, atol=1e-7)
    assert np.allclose(poincare_half_plane_metric().christoffel([0.3, 2.0]), expected, atol=1e-7)


def test_vertical_half_plane_geodesic():
    trajectory = geodesic(poincare_half_plane_metric(), [0.0, 1.0], [0.0, 1.0], h=0.001, T=2.0)
    assert np.max(np.abs(trajectory.column("x"))) < 1e-6
    assert trajectory.column("y")[-1] == pytest.approx(math.exp(2.0), rel=1e-6)


@pytest.mark.slow
def test_geodesic_speed_conserved():
    radius = 500.0
    metric = metric_preset("poincare-half-plane")
    trajectory = geodesic(metric, [0.0, radius], [radius, 0.0], h=1e-3, T=10.0)
    values = speed(metric, trajectory)
    assert values[0] == pytest.approx(1.0)
    assert np.max(np.abs(values - values[0])) / values[0] < 1e-6


def test_constant_custom_metric_has_no_curvature():
    metric = custom_metric([["1", "0"], ["0", "-1"]])
    assert metric.constant
    assert np.array_equal(metric.christoffel([3.0, 4.0]), np.zeros((2, 2, 2)))


def test_metric_errors():
    with pytest.raises(SingularMetricError):
        custom_metric([["0", "0"], ["0", "0"]]).inverse([1.0, 1.0])
    with pytest.raises(ValidationError):
        custom_metric([["1", "x"], ["0", "1"]])([1.0, 1.0])
    with pytest.raises(ValidationError):
        custom_metric([["1", "0"]])
    with pytest.raises(ValidationError):
        MetricField(lambda p: np.eye(3), 2)([0.0, 0.0])
    with pytest.raises(ValidationError):
        metric_preset("spherical")
    with pytest.raises(ValidationError):
        geodesic(minkowski_metric(), [0.0, 0.0], [1.0, 0.0, 0.0], h=0.1, T=1.0)


def test_potential_combines_time_weighted_fields():
    field = PotentialField((lambda p: p[0], lambda p: p[1] ** 2), (lambda t: 2 * t, 0.5))
    assert potential(field, [3.0, 4.0], t=1.5) == pytest.approx(2 * 1.5 * 3.0 + 0.5 * 16.0)
    with pytest.raises(ValidationError):
        PotentialField((lambda p: 1.0,), ())
