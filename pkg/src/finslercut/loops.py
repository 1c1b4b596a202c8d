"""Minima of the mixed distance functional on the cut locus, the
two-segments dichotomy, geodesic loops through a submanifold, and the
at-least-two-geodesics construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cutlocus import (Report, ShootingPlan, _ray_index, cut_locus,
                       get_field)
from .errors import NumericalFailure, ReversibilityError
from .submanifold import point_submanifold

SMOOTH_TOL = 1e-4
BROKEN_TOL = 1e-2


@dataclass
class LoopResult:
    x0: tuple
    d_min: float
    segments: list              # the two N-segments (Minimizer objects)
    loop: list                  # samples (loop parameter, chart, coords)
    smoothness_residual: float
    length: float
    branch: str                 # "loop" or "focal"
    midpoint_gap: float = np.nan
    diagnostics: dict = dc_field(default_factory=dict)


def reversibility_defect(metric, n_samples=16, seed=0):
    """Max relative |F(x, v) - F(x, -v)| over random unit-box samples."""
    rng = np.random.default_rng(seed)
    n = metric.atlas.dim
    worst = 0.0
    for _ in range(n_samples):
        x = rng.uniform(-0.5, 0.5, n)
        v = rng.standard_normal(n)
        from .atlas import TangentVec
        a = metric.F(TangentVec(0, x, v))
        b = metric.F(TangentVec(0, x, -v))
        worst = max(worst, abs(a - b) / max(a, b))
    return worst


def require_reversible(metric, tol=1e-8):
    defect = reversibility_defect(metric)
    if defect > tol:
        raise ReversibilityError(
            f"metric is irreversible (max relative F(v) vs F(-v) defect "
            f"{defect:.3g}); reversed segments are not geodesics")


def _reverse_field(metric, q, plan):
    """Shooting field whose distances give d_metric(x, q) for varying x."""
    rev = metric.reversed_()
    return get_field(rev, point_submanifold(*q), plan)


def min_M_on_cut(metric, N, q, records, plan=None):
    """Minimize M_q(x) = d(N, x) + d(x, q) over the sampled cut locus.

    Grid argmin plus parabolic refinement in the ray parameter.
    """
    finite = [r for r in records if r.cut_point is not None]
    if any(not np.isfinite(r.rho) for r in records if not np.isnan(r.rho)):
        raise NumericalFailure(
            "M is undefined: the cut locus has unbounded directions")
    if not finite:
        raise NumericalFailure("no finite cut records to minimize over")
    plan = plan or ShootingPlan()
    rq = _reverse_field(metric, q, plan)
    vals = np.array([r.rho + rq.distance(r.cut_point, full=False).d
                     for r in finite])
    k = int(np.argmin(vals))
    best_x, best_v = finite[k].cut_point, float(vals[k])

    field = get_field(metric, N, plan)
    if 0 < k < len(finite) - 1:
        a, b, c = vals[k - 1], vals[k], vals[k + 1]
        den = a - 2 * b + c
        if den > 1e-12:
            s = 0.5 * (a - c) / den
            mu0 = field.ray_param(finite[k].ray)
            mu1 = field.ray_param(finite[k + 1].ray)
            mu = mu0 + s * (mu1 - mu0)
            try:
                ray = field.ray_at(mu, finite[k].ray)
                i = _ray_index(field, ray)
                rho = field.cut_time(i).rho
                x = field.path(i, rho).position(rho)
                v = rho + rq.distance(x, full=False).d
                if v < best_v:
                    best_x, best_v = x, float(v)
            except Exception:
                pass
    return best_x, best_v


def verify_two_segments(metric, N, x0, plan=None, classification=None):
    """Exactly-two-segments dichotomy at a non-focal minimizer."""
    if classification and "FirstFocal" in classification:
        raise NumericalFailure(
            "two-segments check refused: x0 is classified FirstFocal, "
            "outside the dichotomy's hypotheses")
    field = get_field(metric, N, plan)
    wit = field.distance(x0, full=True)
    detail = {
        "count": len(wit.minimizers),
        "times": [m.t for m in wit.minimizers],
        "residuals": [m.residual for m in wit.minimizers],
        "d": wit.d,
    }
    return Report("two_segments", len(wit.minimizers) == 2, detail)


def _g_norm(metric, state, w):
    g = metric.fundamental(state)
    return math.sqrt(max(float(w @ g @ w), 0.0))


def _terminal_in_chart(atlas, m, chart):
    term = m.terminal
    if term.chart == chart:
        return term.v
    D = atlas.transition(term.chart, chart).jacobian(term.x)
    return D @ term.v


def _sample_segment(field, m, n_samples=64):
    i = _ray_index(field, m.ray)
    path = field.path(i, max(m.t, 1e-9))
    ts = np.linspace(0.0, m.t, n_samples + 1)
    return [(float(t),) + tuple([path.position(t)[0],
                                 path.position(t)[1]]) for t in ts]


def find_geodesic_loop(metric, N, plan=None, records=None) -> LoopResult:
    """Unit-speed geodesic loop through N via the minimum of d(N, .) on the
    cut locus; requires a reversible metric.  At focal minima, returns the
    focal branch instead of a loop."""
    require_reversible(metric)
    plan = plan or ShootingPlan()
    if records is None:
        records = cut_locus(metric, N, plan=plan, classify=False)
    field = get_field(metric, N, plan)

    finite = [(i, r) for i, r in enumerate(records)
              if r.cut_point is not None and np.isfinite(r.rho)]
    if not finite:
        raise NumericalFailure("no finite cut records; scenario noncompact?")
    rhos = np.array([r.rho for _, r in finite])
    order = np.argsort(rhos)
    focal_minima = []
    for k in order:
        _, rec = finite[k]
        if np.isfinite(rec.lam) and abs(rec.rho - rec.lam) <= 1e-5:
            focal_minima.append(rec)
            continue
        x0 = rec.cut_point
        wit = field.distance(x0, full=True)
        if len(wit.minimizers) < 2:
            continue
        m1, m2 = wit.minimizers[:2]
        chart = x0[0]
        v1 = _terminal_in_chart(metric.atlas, m1, chart)
        v2 = _terminal_in_chart(metric.atlas, m2, chart)
        resid = _g_norm(metric, m1.terminal, v1 + v2)
        if resid > SMOOTH_TOL:
            continue
        # loop = first segment forward, second segment reversed
        seg1 = _sample_segment(field, m1)
        seg2 = _sample_segment(field, m2)
        loop = [(t, c, x) for t, c, x in seg1]
        L1 = m1.t
        loop += [(L1 + (m2.t - t), c, x) for t, c, x in reversed(seg2[:-1])]
        length = m1.t + m2.t
        return LoopResult(
            x0=x0, d_min=float(wit.d), segments=[m1, m2], loop=loop,
            smoothness_residual=float(resid), length=float(length),
            branch="loop", midpoint_gap=abs(L1 - wit.d),
            diagnostics={"rho": rec.rho, "lam": rec.lam})
    if focal_minima:
        rec = min(focal_minima, key=lambda r: r.rho)
        return LoopResult(
            x0=rec.cut_point, d_min=float(rec.rho), segments=[], loop=[],
            smoothness_residual=np.nan, length=np.nan, branch="focal",
            diagnostics={"rho": rec.rho, "lam": rec.lam,
                         "note": "minimum of d(N, .) on the cut locus is a "
                                 "focal point"})
    raise NumericalFailure(
        "no smooth loop and no focal minimum found among cut records")


@dataclass
class TwoGeodesics:
    q: tuple
    direct: object              # Minimizer (or None when q is on N)
    x0: tuple
    via_segments: list          # (N -> x0 segment, x0 -> q segment)
    joint_residual: float
    lengths: tuple
    branch: str
    diagnostics: dict = dc_field(default_factory=dict)


def two_geodesics_to(metric, N, q, plan=None, records=None) -> TwoGeodesics:
    """The minimizing segment to q plus a second geodesic through the
    minimizer x0 of M_q on the cut locus."""
    plan = plan or ShootingPlan()
    field = get_field(metric, N, plan)
    if records is None:
        records = cut_locus(metric, N, plan=plan)
    focal_only = [r for r in records
                  if r.classification == {"FirstFocal"}]
    if focal_only:
        return TwoGeodesics(
            q=q, direct=None, x0=focal_only[0].cut_point, via_segments=[],
            joint_residual=np.nan, lengths=(np.nan, np.nan), branch="focal",
            diagnostics={"n_focal_only": len(focal_only)})

    wit = field.distance(q, full=True)
    direct = wit.minimizers[0]
    x0, M_val = min_M_on_cut(metric, N, q, records, plan)

    wit_x0 = field.distance(x0, full=True)
    pf = get_field(metric, point_submanifold(*x0), plan)
    if field.atlas.coord_distance(x0, q) < 1e-9:
        # q is itself the minimizer: second geodesic degenerates to the pair
        # of N-segments meeting at q
        a, b = wit_x0.minimizers[:2]
        va = _terminal_in_chart(metric.atlas, a, x0[0])
        vb = _terminal_in_chart(metric.atlas, b, x0[0])
        resid = _g_norm(metric, a.terminal, va + vb)
        return TwoGeodesics(q, direct, x0, [a, b], float(resid),
                            (direct.t, a.t + b.t), "at-cut",
                            {"M": M_val})
    wit_q = pf.distance(q, full=True)
    best = None
    pairs = []
    for a in wit_x0.minimizers[:2]:
        va = _terminal_in_chart(metric.atlas, a, x0[0])
        for b in wit_q.minimizers[:2]:
            resid = _g_norm(metric, a.terminal, va - b.ray.v)
            pairs.append((float(resid), a, b))
            if best is None or resid < best[0]:
                best = (float(resid), a, b)
    resid, a, b = best
    if resid > SMOOTH_TOL:
        return TwoGeodesics(q, direct, x0, [a, b], resid,
                            (direct.t, a.t + b.t), "unmatched",
                            {"pair_residuals": [p[0] for p in pairs],
                             "M": M_val})
    return TwoGeodesics(q, direct, x0, [a, b], resid,
                        (direct.t, a.t + b.t), "two-geodesics",
                        {"pair_residuals": [p[0] for p in pairs],
                         "M": M_val})
