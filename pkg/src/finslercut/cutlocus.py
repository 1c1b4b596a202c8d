"""Distances from a submanifold by multistart normal shooting, focal and cut
times, the cut locus, and the numerical checks of the structural theorems.

A ``NormalShooting`` field caches one dense geodesic per grid ray and reuses
them across distance queries: closest-approach search over the ray fan picks
candidates, Gauss-Newton on (cone parameter, time) polishes each to an exact
arrival.  Cut times come from bisection on the minimality predicate, with
the first focal time as an upper bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .atlas import TangentVec
from .errors import NumericalFailure, UnreachedPointError
from .geodesic import first_degeneracy, integrate_geodesic
from .submanifold import (NormalJacobiFlow, NormalRay, point_submanifold,
                          sample_unit_cone, unit_normal)

SEPARATING = "Separating"
FIRST_FOCAL = "FirstFocal"


@dataclass
class ShootingPlan:
    theta_count: int = 128
    psi_count: int = 64
    horizon: float = 3.0
    sides: object = None
    ode_rtol: float = 1e-9
    ode_atol: float = 1e-11
    query_rtol: float = None    # arrival-refinement integrations only
    query_atol: float = None
    newton_tol: float = 1e-9
    bisect_tol: float = 1e-6
    min_slack: float = 1e-6
    distinct_angle: float = 1e-3
    refine_levels: int = 2
    seed: int = 0
    focal_floor: float = 0.02
    sv_rel: float = 1e-7
    max_candidates: int = 8
    quick_candidates: int = 4
    sample_dt_frac: float = 1.0 / 128.0

    def key(self):
        return (self.theta_count, self.psi_count, self.horizon,
                str(self.sides), self.ode_rtol, self.ode_atol,
                self.query_rtol, self.query_atol,
                self.newton_tol, self.bisect_tol, self.min_slack,
                self.distinct_angle, self.seed)


@dataclass
class Minimizer:
    ray: NormalRay
    t: float
    terminal: TangentVec
    residual: float


@dataclass
class DistanceWitness:
    q: tuple
    d: float
    minimizers: list


@dataclass
class CutTimeResult:
    rho: float
    lam: float
    horizon_limited: bool = False
    unbounded: bool = False
    bisection_iters: int = 0


@dataclass
class CutRecord:
    ray: NormalRay
    rho: float
    lam: float
    cut_point: tuple = None
    classification: set = dc_field(default_factory=set)
    competitor: tuple = None
    horizon_limited: bool = False
    unbounded: bool = False
    diagnostics: dict = dc_field(default_factory=dict)


class _LinePath:
    """Straight-line stand-in for a geodesic path when the spray vanishes
    (x-independent metric in a single chart)."""

    def __init__(self, chart, x0, v, T):
        self.chart = chart
        self.x0 = np.asarray(x0, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.t1 = float(T)

    def position(self, t):
        return (self.chart, self.x0 + t * self.v)

    def velocity(self, t):
        return self.v.copy()

    def state(self, t):
        return TangentVec(self.chart, self.x0 + t * self.v, self.v)


class NormalShooting:
    """Cached shooting field from a submanifold under one sampling plan."""

    def __init__(self, metric, N, plan: ShootingPlan):
        self.metric = metric
        self.N = N
        self.plan = plan
        self.atlas = metric.atlas
        self.rays, self.sample_failures = sample_unit_cone(
            metric, N, (plan.theta_count, plan.psi_count), sides=plan.sides)
        if not self.rays:
            raise NumericalFailure("unit cone sampling produced no rays")
        self._paths = {}
        self._samples = {}
        self._flows = {}
        self._build_branches()

    # -- ray bookkeeping -------------------------------------------------

    def _build_branches(self):
        n = self.atlas.dim
        codim = n - self.N.k
        self.branches = []
        if codim == 1:
            by_side = {}
            for i, r in enumerate(self.rays):
                by_side.setdefault(float(np.sign(r.psi[0])), []).append(i)
            for side in sorted(by_side):
                idx = sorted(by_side[side], key=lambda i: self.rays[i].theta[0])
                cyclic = bool(self.N.k and self.N.periodic[0])
                self.branches.append((idx, cyclic))
        else:
            idx = sorted(range(len(self.rays)),
                         key=lambda i: math.atan2(self.rays[i].psi[1],
                                                  self.rays[i].psi[0]))
            self.branches.append((idx, True))

    def ray_param(self, ray: NormalRay):
        """Cone parameters (theta..., psi angle) driving Gauss-Newton."""
        mu = list(ray.theta)
        if self.atlas.dim - self.N.k == 2:
            mu.append(math.atan2(ray.psi[1], ray.psi[0]))
        return np.array(mu)

    def ray_at(self, mu, template: NormalRay) -> NormalRay:
        k = self.N.k
        theta = np.asarray(mu[:k], dtype=float)
        if k:
            theta = self.N.wrap_theta(theta)
            if not self.N.periodic[0]:
                theta = np.clip(theta, self.N.theta_box[0], self.N.theta_box[1])
        if self.atlas.dim - k == 2:
            a = mu[k]
            psi = np.array([math.cos(a), math.sin(a)])
        else:
            psi = template.psi
        return unit_normal(self.metric, self.N, theta, psi)

    # -- cached geodesics ------------------------------------------------

    def path(self, i, span=None):
        span = span or self.plan.horizon
        cached = self._paths.get(i)
        if cached is None or cached.t1 < span - 1e-12:
            cached = self._integrate_ray(self.rays[i], span)
            self._paths[i] = cached
            self._samples.pop(i, None)
            self._stack = None
        return cached

    def _integrate_ray(self, ray, span):
        return integrate_geodesic(self.metric, ray.tangent(), span,
                                  rtol=self.plan.ode_rtol,
                                  atol=self.plan.ode_atol)

    def samples(self, i):
        got = self._samples.get(i)
        if got is None:
            path = self.path(i)
            dt = self.plan.horizon * self.plan.sample_dt_frac
            blocks = []
            for seg in path.segments:
                m = max(2, int(math.ceil((seg.t1 - seg.t0) / dt)) + 1)
                ts = np.linspace(seg.t0, seg.t1, m)
                n = self.atlas.dim
                xs = np.empty((m, n))
                for j, t in enumerate(ts):
                    xs[j] = seg.eval(t)[:n]
                blocks.append((seg.chart, ts, xs))
            got = blocks
            self._samples[i] = got
        return got

    # -- closest approach ------------------------------------------------

    def _block_distances(self, q, chart, xs):
        qchart, qx = q
        if chart == qchart:
            target = np.asarray(qx, dtype=float)
        else:
            try:
                with np.errstate(all="ignore"):
                    target = self.atlas.convert(q, chart)
            except (ZeroDivisionError, FloatingPointError):
                return np.full(len(xs), np.inf)
            if not np.all(np.isfinite(target)):
                return np.full(len(xs), np.inf)
        d = xs - target
        lat = self.atlas.periodic_lattice
        if lat is not None:
            d = d - lat * np.round(d / lat)
        return np.linalg.norm(d, axis=1)

    def _stacked(self):
        """Fan samples of every ray stacked per chart for vectorized search."""
        got = getattr(self, "_stack", None)
        if got is not None and got[0] == len(self.rays):
            return got[1]
        per_chart = {}
        for i in range(len(self.rays)):
            for chart, ts, xs in self.samples(i):
                per_chart.setdefault(chart, []).append((i, ts, xs))
        stacked = {}
        for chart, blocks in per_chart.items():
            xs = np.concatenate([b[2] for b in blocks])
            ts = np.concatenate([b[1] for b in blocks])
            rid = np.concatenate([np.full(len(b[1]), b[0]) for b in blocks])
            # block boundary flags stop dip detection from crossing rays
            starts = np.zeros(len(ts), dtype=bool)
            ends = np.zeros(len(ts), dtype=bool)
            pos = 0
            for b in blocks:
                starts[pos] = True
                pos += len(b[1])
                ends[pos - 1] = True
            stacked[chart] = (xs, ts, rid, starts, ends)
        self._stack = (len(self.rays), stacked)
        return stacked

    def approach(self, q):
        """Per-ray (t_closest, coord_distance) against the cached fan.

        A wrapping geodesic can pass q several times; among dips of the
        distance profile within sampling resolution of the deepest one,
        the earliest is kept, so later re-arrivals cannot shadow it.
        """
        nrays = len(self.rays)
        dips = [[] for _ in range(nrays)]
        for chart, (xs, ts, rid, starts, ends) in self._stacked().items():
            dd = self._block_distances(q, chart, xs)
            if not np.any(np.isfinite(dd)):
                continue
            left = np.empty_like(dd)
            left[1:] = dd[:-1]
            left[starts] = np.inf
            right = np.empty_like(dd)
            right[:-1] = dd[1:]
            right[ends] = np.inf
            for j in np.flatnonzero((dd <= left) & (dd <= right)):
                t, d = float(ts[j]), float(dd[j])
                if np.isfinite(left[j]) and np.isfinite(right[j]):
                    # parabolic dip refinement recovers near-zero misses
                    # hidden by the sample spacing
                    a, b, c = left[j], d, right[j]
                    den = a - 2 * b + c
                    if den > 1e-300:
                        s = 0.5 * (a - c) / den
                        s = min(1.0, max(-1.0, s))
                        t = t + s * (float(ts[min(j + 1, len(ts) - 1)]) - t)
                        d = max(0.0, b - 0.25 * (a - c) * s)
                dips[rid[j]].append((t, d))
        out = np.empty((nrays, 3))
        dt = self.plan.horizon * self.plan.sample_dt_frac
        for i in range(nrays):
            if not dips[i]:
                out[i] = (0.0, np.inf, 0.0)
                continue
            deep_t, deep_d = min(dips[i], key=lambda p: p[1])
            early_t, early_d = min(p for p in dips[i]
                                   if p[1] <= deep_d + 4.0 * dt)
            out[i] = (early_t, early_d, deep_t)
        return out

    def _candidates(self, q, limit):
        app = self.approach(q)
        # rank by miss distance plus a mild time penalty: late re-arrivals
        # from farther lattice copies must not crowd out an early competitor
        # whose only miss is the angular grid gap
        score = app[:, 1] + 0.05 * app[:, 0]
        picks = []
        for idx, cyclic in self.branches:
            m = len(idx)
            for pos, i in enumerate(idx):
                if m == 1:
                    picks.append(i)
                    continue
                left = idx[(pos - 1) % m] if (cyclic or pos > 0) else None
                right = idx[(pos + 1) % m] if (cyclic or pos < m - 1) else None
                sl = score[left] if left is not None else np.inf
                sr = score[right] if right is not None else np.inf
                tie = 1e-7 * (1.0 + score[i])
                if score[i] < sl + tie and score[i] <= sr + tie:
                    picks.append(i)
        best = int(np.argmin(score))
        if best not in picks:
            picks.append(best)
        picks.sort(key=lambda i: score[i])
        return [(i, app[i, 0], app[i, 2]) for i in picks[:limit]], score

    # -- Gauss-Newton arrival --------------------------------------------

    def refine_arrival(self, q, i, t0, max_iter=25):
        """Solve exp^nu(t, ray(mu)) = q from the grid ray i at time t0.

        Convergence bottoms out at the query-integration noise floor, so
        the stop tolerance tracks it; a stalled iteration (rank-deficient
        Jacobian at a conjugate arrival) accepts the best residual if it
        is within a modest factor of that floor.
        """
        plan = self.plan
        template = self.rays[i]
        mu = self.ray_param(template).astype(float)
        t = max(float(t0), 1e-9)
        h = 1e-6
        rtol = plan.query_rtol or plan.ode_rtol
        tol = max(plan.newton_tol, 10.0 * rtol) * (1.0 + abs(t0))
        nm = len(mu)

        def residual(mu_, t_):
            ray = self.ray_at(mu_, template)
            path = self._arrival_path(ray, t_)
            pos = path.position(t_)
            r = -self.atlas.displacement(pos, q)
            return r, ray, path

        try:
            r, ray, path = residual(mu, t)
        except Exception:
            return None
        best = (np.linalg.norm(r), ray, float(t), path)
        stalls = 0
        for _ in range(max_iter):
            rn = np.linalg.norm(r)
            if rn <= tol:
                term = path.state(min(t, path.t1))
                return Minimizer(ray, float(t), term, float(rn))
            if rn < best[0]:
                if rn > 0.5 * best[0]:
                    stalls += 1
                else:
                    stalls = 0
                best = (rn, ray, float(t), path)
            else:
                stalls += 1
            if stalls >= 3:
                break
            cols = []
            # time column: velocity expressed in q's chart
            pos = path.position(t)
            vel = path.velocity(t)
            qchart = q[0]
            if pos[0] != qchart:
                Dt = self.atlas.transition(pos[0], qchart).jacobian(pos[1])
                vel = Dt @ vel
            cols.append(vel)
            try:
                for j in range(nm):
                    mu2 = mu.copy()
                    mu2[j] += h
                    r2, _, _ = residual(mu2, t)
                    cols.append((r2 - r) / h)
            except Exception:
                return None
            J = np.column_stack(cols)  # d r / d(t, mu)
            try:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                return None
            dt_cap = 0.5 * self.plan.horizon
            step[0] = np.clip(step[0], -dt_cap, dt_cap)
            t = t + step[0]
            mu = mu + step[1:]
            if t < 1e-9:
                t = 1e-9
            try:
                r, ray, path = residual(mu, t)
            except Exception:
                return None
        if best[0] <= 30.0 * tol:
            rn, ray, t, path = best
            term = path.state(min(t, path.t1))
            return Minimizer(ray, float(t), term, float(rn))
        return None

    def _arrival_path(self, ray, t):
        span = max(t * 1.05, 1e-6)
        if self.metric.x_independent and self.atlas.n_charts == 1:
            return _LinePath(ray.chart, ray.x, ray.v, span)
        return integrate_geodesic(self.metric, ray.tangent(), span,
                                  rtol=self.plan.query_rtol or self.plan.ode_rtol,
                                  atol=self.plan.query_atol or self.plan.ode_atol)

    # -- distances -------------------------------------------------------

    def distinct(self, m1: Minimizer, m2: Minimizer):
        base_gap = self.atlas.coord_distance((m1.ray.chart, m1.ray.x),
                                             (m2.ray.chart, m2.ray.x))
        if base_gap > 1e-5:
            return True
        g = self.metric.fundamental(m1.ray.tangent())
        v1, v2 = m1.ray.v, m2.ray.v
        c = (v1 @ g @ v2) / math.sqrt((v1 @ g @ v1) * (v2 @ g @ v2))
        return math.acos(min(1.0, max(-1.0, c))) > self.plan.distinct_angle

    def distance(self, q, full=True) -> DistanceWitness:
        plan = self.plan
        limit = plan.max_candidates if full else plan.quick_candidates
        cands, score = self._candidates(q, limit)
        arrivals = []
        for i, t_early, t_deep in cands:
            got = self.refine_arrival(q, i, t_early)
            if got is None and abs(t_deep - t_early) > 1e-12:
                got = self.refine_arrival(q, i, t_deep)
            if got is not None:
                arrivals.append(got)
        if not arrivals:
            raise UnreachedPointError(
                f"no shooting root reached q={q}; horizon {plan.horizon} too "
                f"small or cone grid too coarse "
                f"(best approach score {float(np.min(score)):.4g})")
        d = min(a.t for a in arrivals)
        window = max(1e-6, 2 * plan.bisect_tol)
        near = sorted((a for a in arrivals if a.t <= d + window),
                      key=lambda a: a.t)
        minimizers = []
        for a in near:
            if all(self.distinct(a, b) for b in minimizers):
                minimizers.append(a)
        return DistanceWitness(q, float(d), minimizers)

    def is_minimizing(self, path, t, full=False):
        q = path.position(t)
        wit = self.distance(q, full=full)
        return wit.d >= t - self.plan.min_slack

    # -- focal and cut times ---------------------------------------------

    def flow(self, i, span=None):
        span = span or self.plan.horizon
        cached = self._flows.get(i)
        if cached is None or cached.T < span - 1e-12:
            cached = NormalJacobiFlow(self.metric, self.N, self.rays[i], span,
                                      rtol=self.plan.ode_rtol,
                                      atol=self.plan.ode_atol)
            self._flows[i] = cached
        return cached

    def focal_time(self, i, T_max=None):
        T_max = T_max or self.plan.horizon
        fl = self.flow(i, T_max)
        return first_degeneracy(fl.frame, fl.matrix,
                                self.plan.focal_floor, T_max,
                                sv_rel=self.plan.sv_rel)

    def cut_time(self, i) -> CutTimeResult:
        plan = self.plan
        lam = self.focal_time(i)
        hi = min(lam, plan.horizon)
        path = self.path(i, hi)
        iters = 0
        if self.is_minimizing(path, hi):
            if lam <= plan.horizon:
                # beyond-focal lemma: non-minimizing past lam, so rho = lam
                return CutTimeResult(float(lam), float(lam))
            # horizon binds: probe a doubled horizon before declaring
            span2 = 2 * plan.horizon
            lam2 = self.focal_time(i, span2)
            path2 = self.path(i, span2)
            if lam2 == np.inf and self.is_minimizing(path2, span2):
                return CutTimeResult(np.inf, np.inf, unbounded=True)
            if lam2 <= span2:
                hi = lam2
                path = path2
                if self.is_minimizing(path, hi):
                    return CutTimeResult(float(lam2), float(lam2))
                lam = lam2
                lo = plan.horizon
            else:
                return CutTimeResult(np.inf, np.inf, horizon_limited=True)
        else:
            lo = 0.0
        for use_full in (False, True):
            b_lo, b_hi = lo, hi
            while b_hi - b_lo > plan.bisect_tol:
                mid = 0.5 * (b_lo + b_hi)
                iters += 1
                if self.is_minimizing(path, mid, full=use_full):
                    b_lo = mid
                else:
                    b_hi = mid
            rho = 0.5 * (b_lo + b_hi)
            # cross-check with the full candidate set; a quick-mode miss of
            # the nearest competitor shows up as d(cut point) < rho
            wit = self.distance(path.position(rho), full=True)
            if wit.d >= rho - 2.0 * plan.min_slack - 2.0 * plan.bisect_tol:
                break
            hi = rho
        return CutTimeResult(rho, float(lam), bisection_iters=iters)

    def record(self, i, classify=True) -> CutRecord:
        res = self.cut_time(i)
        rec = CutRecord(self.rays[i], res.rho, res.lam,
                        horizon_limited=res.horizon_limited,
                        unbounded=res.unbounded,
                        diagnostics={"bisection_iters": res.bisection_iters})
        if np.isfinite(res.rho):
            rec.cut_point = self.path(i, res.rho).position(res.rho)
            if classify:
                self.classify(rec)
        return rec

    def classify(self, rec: CutRecord):
        plan = self.plan
        # cut points of nearby rays often coincide (poles, antipodes);
        # reuse the witness below the classification tolerance scale
        cache = getattr(self, "_classify_cache", None)
        if cache is None:
            cache = self._classify_cache = {}
        chart, x = rec.cut_point
        key = (chart, tuple(np.round(np.asarray(x, float), 6)))
        wit = cache.get(key)
        if wit is None:
            wit = self.distance(rec.cut_point, full=True)
            cache[key] = wit
        cls = set()
        if len(wit.minimizers) >= 2:
            cls.add(SEPARATING)
            others = [m for m in wit.minimizers
                      if not np.allclose(m.ray.v, rec.ray.v, atol=1e-6)
                      or np.linalg.norm(m.ray.x - rec.ray.x) > 1e-6]
            if others:
                rec.competitor = (others[0].ray, others[0].t)
        if np.isfinite(rec.lam) and abs(rec.rho - rec.lam) <= 1e-5:
            cls.add(FIRST_FOCAL)
        rec.classification = cls
        rec.diagnostics["n_minimizers"] = len(wit.minimizers)
        rec.diagnostics["witness_d"] = wit.d
        if not cls:
            rec.diagnostics["violation"] = (
                f"empty classification: rho={rec.rho:.8g} lam={rec.lam:.8g} "
                f"minimizers={len(wit.minimizers)} d={wit.d:.8g}")
        return rec.classification


# -- module-level operations (cached fields) ------------------------------

_FIELDS = {}


def get_field(metric, N, plan=None) -> NormalShooting:
    plan = plan or ShootingPlan()
    key = (id(metric), id(N), plan.key())
    fld = _FIELDS.get(key)
    if fld is None:
        fld = NormalShooting(metric, N, plan)
        _FIELDS[key] = fld
    return fld


def _ray_index(field, ray):
    for i, r in enumerate(field.rays):
        if (np.array_equal(r.theta, ray.theta)
                and np.array_equal(r.psi, ray.psi)):
            return i
    field.rays.append(ray)
    return len(field.rays) - 1


def focal_time(metric, N, ray, T_max, plan=None):
    """First degeneracy time of the normal exponential along the ray."""
    plan = plan or ShootingPlan(horizon=T_max)
    fl = NormalJacobiFlow(metric, N, ray, T_max,
                          rtol=plan.ode_rtol, atol=plan.ode_atol)
    return first_degeneracy(fl.frame, fl.matrix, plan.focal_floor, T_max,
                            sv_rel=plan.sv_rel)


def distance_to(metric, N, q, plan=None) -> DistanceWitness:
    return get_field(metric, N, plan).distance(q)


def point_distance(metric, p, q, plan=None) -> DistanceWitness:
    plan = plan or ShootingPlan()
    N = point_submanifold(*p)
    return get_field(metric, N, plan).distance(q)


def is_minimizing(metric, N, ray, t, plan=None) -> bool:
    field = get_field(metric, N, plan)
    i = _ray_index(field, ray)
    return field.is_minimizing(field.path(i, t), t)


def cut_time(metric, N, ray, plan=None) -> CutTimeResult:
    field = get_field(metric, N, plan)
    return field.cut_time(_ray_index(field, ray))


def classify_cut_point(metric, N, record: CutRecord, plan=None):
    return get_field(metric, N, plan).classify(record)


def cut_locus(metric, N, grid=None, plan=None, classify=True, side=None):
    """Cut records over the sampled unit cone; per-ray failures collected.

    The fan always covers the whole cone (both sides of a hypersurface),
    since distance queries need every competitor; ``side`` only restricts
    which rays get records.
    """
    plan = plan or ShootingPlan()
    if grid is not None:
        plan.theta_count, plan.psi_count = grid
    field = get_field(metric, N, plan)
    records = []
    for i in range(len(field.rays)):
        if side is not None and np.sign(field.rays[i].psi[0]) != side:
            continue
        try:
            records.append(field.record(i, classify=classify))
        except Exception as exc:
            rec = CutRecord(field.rays[i], np.nan, np.nan)
            rec.diagnostics["error"] = repr(exc)
            records.append(rec)
    return records


# -- theorem-check reports ------------------------------------------------


@dataclass
class Report:
    name: str
    passed: bool
    detail: dict


def check_rho_leq_lambda(records) -> Report:
    violations = []
    for rec in records:
        if np.isnan(rec.rho):
            continue
        if rec.rho > rec.lam + 1e-6:
            violations.append((rec.ray.theta.tolist(), rec.ray.psi.tolist(),
                               rec.rho, rec.lam))
    return Report("rho_leq_lambda", not violations,
                  {"violations": violations, "count": len(records)})


def _cut_point_gap(atlas, a, b):
    return atlas.coord_distance(a, b)


def check_se_dense(records, delta=None, atlas=None) -> Report:
    """Every FirstFocal-only cut point has a Separating neighbor within delta."""
    recs = [r for r in records if r.cut_point is not None and r.classification]
    seps = [r for r in recs if SEPARATING in r.classification]
    if atlas is None:
        raise ValueError("check_se_dense needs the atlas for distances")
    if delta is None:
        # 3x the sampling pitch along the computed cut locus
        gaps = []
        for a, b in zip(recs[:-1], recs[1:]):
            gaps.append(_cut_point_gap(atlas, a.cut_point, b.cut_point))
        delta = 3.0 * (np.median(gaps) if gaps else 0.1)
    violations = []
    for r in recs:
        if SEPARATING in r.classification:
            continue
        if not seps:
            violations.append(r.ray.theta.tolist())
            continue
        gap = min(_cut_point_gap(atlas, r.cut_point, s.cut_point)
                  for s in seps)
        if gap > delta:
            violations.append((r.ray.theta.tolist(), gap))
    return Report("se_dense", not violations,
                  {"delta": float(delta), "violations": violations,
                   "n_separating": len(seps), "n_records": len(recs)})


def check_rho_continuity(levels, blowup_factor=10.0) -> Report:
    """Difference-quotient refinement study for continuity of the cut time.

    ``levels`` is a list of record lists from successively doubled grids.
    Flags rays where the local quotient grows faster than refinement by
    more than ``blowup_factor`` across two levels.
    """
    quotients = []
    for records in levels:
        finite = [(i, r.rho) for i, r in enumerate(records)
                  if np.isfinite(r.rho)]
        qmax = 0.0
        pitch = 1.0 / max(len(records), 1)
        for (i1, r1), (i2, r2) in zip(finite[:-1], finite[1:]):
            if i2 - i1 == 1:
                qmax = max(qmax, abs(r2 - r1) / pitch)
        quotients.append(qmax)
    flagged = []
    for a, b in zip(quotients[:-1], quotients[1:]):
        if a > 0 and b > blowup_factor * a:
            flagged.append((a, b))
    return Report("rho_continuity", not flagged,
                  {"max_quotients": quotients, "flagged": flagged})
