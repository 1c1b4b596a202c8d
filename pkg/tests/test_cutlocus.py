import math

import numpy as np
import pytest

import finslercut as fc


def _torus_small():
    atlas = fc.torus_atlas([1.0, 1.0])
    metric = fc.euclidean_metric(atlas)
    N = fc.point_submanifold(0, np.zeros(2))
    plan = fc.ShootingPlan(psi_count=64, horizon=1.5,
                           bisect_tol=1e-8, min_slack=1e-7, seed=1)
    return metric, N, plan


def test_torus_cut_time_along_axis():
    metric, N, plan = _torus_small()
    ray = fc.unit_normal(metric, N, 0.0, (1.0, 0.0))
    res = fc.cut_time(metric, N, ray, plan)
    assert abs(res.rho - 0.5) < 1e-6
    assert not res.horizon_limited and not res.unbounded


def test_torus_cut_time_along_diagonal():
    metric, N, plan = _torus_small()
    s = 1 / math.sqrt(2)
    ray = fc.unit_normal(metric, N, 0.0, (s, s))
    res = fc.cut_time(metric, N, ray, plan)
    assert abs(res.rho - s) < 1e-6


def test_torus_focal_time_infinite(torus_records):
    lams = [r.lam for r in torus_records]
    assert all(math.isinf(l) for l in lams)


def test_torus_cut_points_on_voronoi_boundary(torus_records):
    for rec in torus_records:
        chart, x = rec.cut_point
        # min-image representative lies on the boundary of [-1/2, 1/2]^2
        y = (np.asarray(x) + 0.5) % 1.0 - 0.5
        assert abs(np.max(np.abs(y)) - 0.5) < 1e-6


def test_torus_classification_all_separating(torus_records):
    for rec in torus_records:
        assert "Separating" in rec.classification


def test_distance_witness_on_torus():
    metric, N, plan = _torus_small()
    wit = fc.distance_to(metric, N, (0, np.array([0.3, 0.0])), plan)
    assert abs(wit.d - 0.3) < 1e-7
    wit2 = fc.distance_to(metric, N, (0, np.array([0.9, 0.0])), plan)
    assert abs(wit2.d - 0.1) < 1e-7   # wraps through the identification


def test_point_distance_plane():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    wit = fc.point_distance(metric, (0, np.zeros(2)),
                            (0, np.array([0.6, 0.8])),
                            fc.ShootingPlan(psi_count=64, horizon=3.0))
    assert abs(wit.d - 1.0) < 1e-7


def test_is_minimizing_flags_past_cut():
    metric, N, plan = _torus_small()
    ray = fc.unit_normal(metric, N, 0.0, (1.0, 0.0))
    assert fc.is_minimizing(metric, N, ray, 0.4, plan)
    assert not fc.is_minimizing(metric, N, ray, 0.7, plan)


def test_circle_inward_rho_equals_focal(circle_setup, circle_records):
    atlas, metric, N, plan = circle_setup
    for rec in circle_records:
        assert abs(rec.rho - 1.0) < 1e-6
        assert abs(rec.lam - 1.0) < 1e-6
        assert np.allclose(rec.cut_point[1], [0.0, 0.0], atol=1e-6)


def test_circle_center_is_both_classes(circle_records):
    rec = circle_records[0]
    assert rec.classification == {"Separating", "FirstFocal"}


def test_circle_outward_unbounded(circle_setup):
    atlas, metric, N, plan = circle_setup
    ray = fc.unit_normal(metric, N, 0.5, -1.0)
    res = fc.cut_time(metric, N, ray, plan)
    assert math.isinf(res.rho)
    assert res.unbounded and not res.horizon_limited


def test_unreached_point_raises():
    atlas = fc.flat_atlas(2)
    metric = fc.euclidean_metric(atlas)
    N = fc.point_submanifold(0, np.zeros(2))
    plan = fc.ShootingPlan(psi_count=16, horizon=1.0)
    with pytest.raises(fc.UnreachedPointError):
        fc.distance_to(metric, N, (0, np.array([5.0, 0.0])), plan)


def test_rho_leq_lambda_report(circle_records):
    report = fc.check_rho_leq_lambda(circle_records)
    assert report.passed
    assert not report.detail["violations"]


def test_se_dense_report(ellipse_setup, ellipse_records):
    atlas = ellipse_setup[0]
    report = fc.check_se_dense(ellipse_records, atlas=atlas)
    assert report.passed


def test_rho_continuity_report():
    metric, N, plan = _torus_small()
    import copy
    coarse_plan = copy.copy(plan)
    coarse_plan.psi_count = 32
    coarse = fc.cut_locus(metric, N, plan=coarse_plan, classify=False)
    fine = fc.cut_locus(metric, N, plan=plan, classify=False)
    report = fc.check_rho_continuity([coarse, fine])
    assert report.passed


def test_cut_record_has_competitor(torus_records):
    rec = torus_records[0]
    assert rec.competitor is not None
    ray, t = rec.competitor
    assert t > 0
