import math

import numpy as np
import pytest

import finslercut as fc
from finslercut.atlas import TangentVec


def test_flat_geodesics_are_straight_lines():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    start = TangentVec(0, np.array([0.1, -0.3]), np.array([0.6, 0.8]))
    path = fc.integrate_geodesic(metric, start, 2.0)
    for t in (0.0, 0.5, 1.7, 2.0):
        chart, x = path.position(t)
        assert chart == 0
        assert np.allclose(x, start.x + t * start.v, atol=1e-9)


def test_unit_speed_is_preserved():
    atlas = fc.sphere_atlas()
    metric = fc.sphere_metric(atlas)
    v = np.array([0.5, 0.0])     # F = 2|v| = 1 at the origin
    path = fc.integrate_geodesic(metric, TangentVec(0, np.zeros(2), v), 3.0)
    speeds = np.array([s for _, s in path.knot_speeds])
    assert np.max(np.abs(speeds - 1.0)) < 1e-7


def test_sphere_geodesic_returns_after_full_period():
    atlas = fc.sphere_atlas()
    metric = fc.sphere_metric(atlas)
    v = np.array([0.5, 0.0])
    path = fc.integrate_geodesic(metric, TangentVec(0, np.zeros(2), v),
                                 2 * math.pi + 0.1, rtol=1e-10, atol=1e-12)
    q = path.position(2 * math.pi)
    assert atlas.coord_distance(q, (0, np.zeros(2))) < 1e-6


def test_sphere_antipode_at_pi():
    atlas = fc.sphere_atlas()
    metric = fc.sphere_metric(atlas)
    v = np.array([0.5, 0.0])
    path = fc.integrate_geodesic(metric, TangentVec(0, np.zeros(2), v),
                                 3.3, rtol=1e-10, atol=1e-12)
    # the antipode of chart 0's origin is chart 1's origin
    q = path.position(math.pi)
    assert atlas.coord_distance(q, (1, np.zeros(2))) < 1e-7


def test_path_length_matches_parameter_for_unit_speed():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    start = TangentVec(0, np.zeros(2), np.array([1.0, 0.0]))
    path = fc.integrate_geodesic(metric, start, 1.7)
    assert math.isclose(fc.path_length(metric, path), 1.7, rel_tol=1e-9)
    assert math.isclose(fc.path_energy(metric, path), 0.5 * 1.7,
                        rel_tol=1e-9)


def test_exp_map_flat():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    chart, x = fc.exp_map(metric, (0, np.zeros(2)), np.array([0.3, 0.4]))
    assert np.allclose(x, [0.3, 0.4], atol=1e-10)


def test_conjugate_time_on_sphere():
    atlas = fc.sphere_atlas()
    metric = fc.sphere_metric(atlas)
    t = fc.conjugate_time(metric, (0, np.zeros(2)), np.array([0.5, 0.0]),
                          4.0, rtol=1e-10, atol=1e-12)
    assert abs(t - math.pi) < 1e-6


def test_conjugate_time_flat_is_infinite():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    t = fc.conjugate_time(metric, (0, np.zeros(2)), np.array([1.0, 0.0]),
                          5.0)
    assert math.isinf(t)


def test_linearized_flow_matches_finite_differences():
    atlas = fc.sphere_atlas()
    metric = fc.sphere_metric(atlas)
    x0 = np.array([0.05, -0.1])
    v0 = np.array([0.45, 0.1])
    T = 1.2
    frame = fc.linearized_flow(metric, TangentVec(0, x0, v0), T,
                               np.zeros((2, 2)), np.eye(2),
                               rtol=1e-10, atol=1e-12)
    J = frame.J(T)
    h = 1e-6
    for j in range(2):
        dv = np.zeros(2)
        dv[j] = h
        pp = fc.integrate_geodesic(metric, TangentVec(0, x0, v0 + dv), T,
                                   rtol=1e-11, atol=1e-13).position(T)
        pm = fc.integrate_geodesic(metric, TangentVec(0, x0, v0 - dv), T,
                                   rtol=1e-11, atol=1e-13).position(T)
        assert pp[0] == pm[0] == 0
        fd = (pp[1] - pm[1]) / (2 * h)
        assert np.max(np.abs(J[:, j] - fd)) < 1e-4


def test_torus_wraps_on_comparison():
    atlas = fc.torus_atlas([1.0, 1.0])
    metric = fc.euclidean_metric(atlas)
    start = TangentVec(0, np.zeros(2), np.array([1.0, 0.0]))
    path = fc.integrate_geodesic(metric, start, 1.0)
    q = path.position(1.0)
    assert atlas.coord_distance(q, (0, np.zeros(2))) < 1e-9


def test_integration_beyond_chart_raises():
    atlas = fc.flat_atlas(2, halfwidth=1.0)
    metric = fc.euclidean_metric(atlas)
    start = TangentVec(0, np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(fc.AtlasExitError):
        fc.integrate_geodesic(metric, start, 5.0)
