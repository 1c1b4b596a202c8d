"""Scenario configuration, the builtin registry, task orchestration, and
output emission (JSON, CSV, SVG, run manifest, golden summaries).
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

try:
    import jsonschema
except ImportError:     # pragma: no cover
    jsonschema = None

from . import __version__ as _pkg_version
from .atlas import flat_atlas, sphere_atlas, torus_atlas
from .cutlocus import (ShootingPlan, check_rho_continuity, check_rho_leq_lambda,
                       check_se_dense, cut_locus, get_field)
from .errors import FinslerError, ReversibilityError, ScenarioError
from .metric import (MinkowskiQuarticMetric, RandersMetric, ValidationPlan,
                     euclidean_metric, sphere_metric, validate_metric)
from .submanifold import (axis_line_submanifold, circle_submanifold,
                          ellipse_submanifold, point_submanifold)
from . import loops as loops_mod
from . import topology as topo_mod

SCHEMA_VERSION = "1.0"

METRIC_FAMILIES = ("euclidean", "sphere-round", "randers", "minkowski-quartic")
SUBMANIFOLD_FAMILIES = ("point", "circle", "ellipse", "axis-line")
MANIFOLD_TYPES = ("flat", "torus", "sphere-stereo")
TASKS = ("validate", "cutlocus", "classify", "retracts", "dfcheck",
         "loops", "theorems")

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "manifold", "metric", "submanifold"],
    "properties": {
        "schema_version": {"type": "string"},
        "name": {"type": "string", "minLength": 1},
        "manifold": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": list(MANIFOLD_TYPES)},
                "dim": {"type": "integer", "minimum": 2},
                "periods": {"type": "array",
                            "items": {"type": "number",
                                      "exclusiveMinimum": 0}},
            },
        },
        "metric": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": list(METRIC_FAMILIES)},
                "b": {"type": "array", "items": {"type": "number"}},
                "eps": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "submanifold": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": list(SUBMANIFOLD_FAMILIES)},
                "chart": {"type": "integer", "minimum": 0},
                "point": {"type": "array", "items": {"type": "number"}},
                "center": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "b": {"type": "number", "exclusiveMinimum": 0},
                "direction": {"type": "array", "items": {"type": "number"}},
                "halfwidth": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta_count": {"type": "integer", "minimum": 1},
                "psi_count": {"type": "integer", "minimum": 1},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "refine_levels": {"type": "integer", "minimum": 1},
                "side": {"enum": [1, -1, None]},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ode_rel": {"type": "number", "exclusiveMinimum": 0},
                "ode_abs": {"type": "number", "exclusiveMinimum": 0},
                "query_rel": {"type": "number", "exclusiveMinimum": 0},
                "query_abs": {"type": "number", "exclusiveMinimum": 0},
                "newton": {"type": "number", "exclusiveMinimum": 0},
                "bisection": {"type": "number", "exclusiveMinimum": 0},
                "min_slack": {"type": "number", "exclusiveMinimum": 0},
                "distinct_angle": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "tasks": {"type": "array", "items": {"enum": list(TASKS)}},
        "seed": {"type": "integer", "minimum": 0,
                 "maximum": 2 ** 64 - 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "formats": {"type": "array",
                            "items": {"enum": ["json", "csv", "svg"]}},
                "directory": {"type": "string"},
            },
        },
    },
}

_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "manifold": {"dim": 2, "periods": [1.0, 1.0]},
    "metric": {},
    "submanifold": {"chart": 0},
    "grids": {"theta_count": 128, "psi_count": 64, "horizon": 3.0,
              "refine_levels": 1, "side": None},
    "tolerances": {"ode_rel": 1e-9, "ode_abs": 1e-11,
                   "newton": 1e-9, "bisection": 1e-6,
                   "min_slack": 1e-6, "distinct_angle": 1e-3},
    "tasks": ["validate", "cutlocus", "classify", "theorems"],
    "seed": 0,
    "output": {"formats": ["json", "csv", "svg"], "directory": "out"},
}


@dataclass
class Scenario:
    name: str
    manifold: dict
    metric: dict
    submanifold: dict
    grids: dict
    tolerances: dict
    tasks: list
    seed: int
    output: dict

    def raw(self):
        return {
            "schema_version": SCHEMA_VERSION, "name": self.name,
            "manifold": self.manifold, "metric": self.metric,
            "submanifold": self.submanifold, "grids": self.grids,
            "tolerances": self.tolerances, "tasks": self.tasks,
            "seed": self.seed, "output": self.output,
        }


def _merged(section, data):
    out = dict(_DEFAULTS.get(section, {}))
    out.update(data.get(section, {}))
    return out


def parse_scenario(text) -> Scenario:
    """Validated Scenario from a JSON document (or an already-parsed dict)."""
    if isinstance(text, dict):
        data = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        msg = exc.message
        if list(exc.absolute_path)[-1:] == ["family"]:
            opts = (METRIC_FAMILIES
                    if "metric" in list(exc.absolute_path)
                    else SUBMANIFOLD_FAMILIES)
            msg = f"unknown family {exc.instance!r}; valid: {', '.join(opts)}"
        raise ScenarioError(f"invalid scenario at {pointer}: {msg}",
                            pointer=pointer) from exc
    return Scenario(
        name=data["name"],
        manifold=_merged("manifold", data),
        metric=_merged("metric", data),
        submanifold=_merged("submanifold", data),
        grids=_merged("grids", data),
        tolerances=_merged("tolerances", data),
        tasks=list(data.get("tasks", _DEFAULTS["tasks"])),
        seed=int(data.get("seed", 0)),
        output=_merged("output", data),
    )


# -- builtin registry -----------------------------------------------------

BUILTINS = {
    "sphere-point": {
        "name": "sphere-point",
        "manifold": {"type": "sphere-stereo"},
        "metric": {"family": "sphere-round"},
        "submanifold": {"family": "point", "point": [0.0, 0.0]},
        "grids": {"psi_count": 64, "horizon": 4.0},
        "tolerances": {"ode_rel": 1e-8, "ode_abs": 1e-10,
                       "query_rel": 1e-7, "query_abs": 1e-9,
                       "min_slack": 1e-5},
        "tasks": ["validate", "cutlocus", "classify", "theorems"],
        "seed": 11,
    },
    "sphere-equator": {
        "name": "sphere-equator",
        "manifold": {"type": "sphere-stereo"},
        "metric": {"family": "sphere-round"},
        "submanifold": {"family": "circle", "radius": 1.0},
        "grids": {"theta_count": 32, "horizon": 4.0},
        "tolerances": {"ode_rel": 1e-8, "ode_abs": 1e-10,
                       "query_rel": 1e-7, "query_abs": 1e-9,
                       "min_slack": 1e-5},
        "tasks": ["cutlocus", "classify", "loops", "theorems"],
        "seed": 12,
    },
    "torus-point": {
        "name": "torus-point",
        "manifold": {"type": "torus", "periods": [1.0, 1.0]},
        "metric": {"family": "euclidean"},
        "submanifold": {"family": "point", "point": [0.0, 0.0]},
        "grids": {"psi_count": 128, "horizon": 1.5, "refine_levels": 2},
        "tolerances": {"bisection": 1e-8, "min_slack": 1e-7},
        "tasks": ["validate", "cutlocus", "classify", "retracts",
                  "dfcheck", "loops", "theorems"],
        "seed": 13,
    },
    "torus-quartic-point": {
        "name": "torus-quartic-point",
        "manifold": {"type": "torus", "periods": [1.0, 1.0]},
        "metric": {"family": "minkowski-quartic", "eps": 0.1},
        "submanifold": {"family": "point", "point": [0.0, 0.0]},
        "grids": {"psi_count": 64, "horizon": 1.5},
        "tolerances": {"bisection": 1e-8, "min_slack": 1e-7},
        "tasks": ["validate", "cutlocus", "classify", "loops", "theorems"],
        "seed": 14,
    },
    "plane-circle": {
        "name": "plane-circle",
        "manifold": {"type": "flat"},
        "metric": {"family": "euclidean"},
        "submanifold": {"family": "circle", "radius": 1.0},
        "grids": {"theta_count": 128, "horizon": 3.0, "side": 1,
                  "refine_levels": 2},
        "tasks": ["validate", "cutlocus", "classify", "dfcheck", "theorems"],
        "seed": 15,
    },
    "plane-ellipse": {
        "name": "plane-ellipse",
        "manifold": {"type": "flat"},
        "metric": {"family": "euclidean"},
        "submanifold": {"family": "ellipse", "a": 2.0, "b": 1.0},
        "grids": {"theta_count": 256, "horizon": 3.0, "side": 1},
        "tasks": ["cutlocus", "classify", "retracts", "theorems"],
        "seed": 16,
    },
    "randers-plane-point": {
        "name": "randers-plane-point",
        "manifold": {"type": "flat"},
        "metric": {"family": "randers", "b": [0.5, 0.0]},
        "submanifold": {"family": "point", "point": [0.0, 0.0]},
        "grids": {"psi_count": 64, "horizon": 3.0},
        "tasks": ["validate", "dfcheck", "loops"],
        "seed": 17,
    },
    "randers-plane-axis": {
        "name": "randers-plane-axis",
        "manifold": {"type": "flat"},
        "metric": {"family": "randers", "b": [0.5, 0.0]},
        "submanifold": {"family": "axis-line", "point": [0.0, 0.0],
                        "direction": [0.0, 1.0], "halfwidth": 4.0},
        "grids": {"theta_count": 33, "horizon": 3.0},
        "tasks": ["validate", "cutlocus"],
        "seed": 18,
    },
}

_DESCRIPTIONS = {
    "sphere-point": "round sphere, point source; every cut time is pi",
    "sphere-equator": "round sphere, equator curve; poles are focal",
    "torus-point": "flat unit torus, point source; Voronoi-edge cut locus",
    "torus-quartic-point": "flat torus with a quartic Minkowski norm",
    "plane-circle": "Euclidean plane, unit circle; center is the cut locus",
    "plane-ellipse": "Euclidean plane, 2x1 ellipse; medial segment cut locus",
    "randers-plane-point": "irreversible Randers plane, point source",
    "randers-plane-axis": "Randers plane, vertical line; asymmetric normals",
}


def list_builtin_scenarios():
    return [(name, _DESCRIPTIONS[name]) for name in BUILTINS]


def builtin_scenario(name) -> Scenario:
    if name not in BUILTINS:
        raise ScenarioError(
            f"unknown builtin {name!r}; available: {', '.join(BUILTINS)}")
    return parse_scenario(json.dumps(BUILTINS[name]))


# -- geometry construction ------------------------------------------------


def build_geometry(sc: Scenario):
    """Atlas, metric, submanifold, and shooting plan from a scenario."""
    man = sc.manifold
    if man["type"] == "flat":
        atlas = flat_atlas(man.get("dim", 2))
    elif man["type"] == "torus":
        atlas = torus_atlas(man.get("periods", [1.0, 1.0]))
    else:
        atlas = sphere_atlas()

    met = sc.metric
    fam = met["family"]
    if fam == "euclidean":
        metric = euclidean_metric(atlas)
    elif fam == "sphere-round":
        if man["type"] != "sphere-stereo":
            raise ScenarioError("sphere-round metric needs sphere-stereo "
                                "manifold", pointer="/metric/family")
        metric = sphere_metric(atlas)
    elif fam == "randers":
        metric = RandersMetric(atlas, np.asarray(met.get("b", [0.0, 0.0])))
    else:
        metric = MinkowskiQuarticMetric(atlas, eps=met.get("eps", 0.1))

    sub = sc.submanifold
    sfam = sub["family"]
    chart = sub.get("chart", 0)
    if sfam == "point":
        N = point_submanifold(chart, np.asarray(sub.get("point", [0.0, 0.0])))
    elif sfam == "circle":
        N = circle_submanifold(chart, tuple(sub.get("center", (0.0, 0.0))),
                               sub.get("radius", 1.0))
    elif sfam == "ellipse":
        N = ellipse_submanifold(chart, a=sub.get("a", 2.0),
                                b=sub.get("b", 1.0),
                                center=tuple(sub.get("center", (0.0, 0.0))))
    else:
        N = axis_line_submanifold(chart, tuple(sub.get("point", (0.0, 0.0))),
                                  tuple(sub.get("direction", (0.0, 1.0))),
                                  half_extent=sub.get("halfwidth", 4.0))

    g, tol = sc.grids, sc.tolerances
    plan = ShootingPlan(
        theta_count=g.get("theta_count", 128),
        psi_count=g.get("psi_count", 64),
        horizon=g.get("horizon", 3.0),
        ode_rtol=tol.get("ode_rel", 1e-9),
        ode_atol=tol.get("ode_abs", 1e-11),
        query_rtol=tol.get("query_rel"),
        query_atol=tol.get("query_abs"),
        newton_tol=tol.get("newton", 1e-9),
        bisect_tol=tol.get("bisection", 1e-6),
        min_slack=tol.get("min_slack", 1e-6),
        distinct_angle=tol.get("distinct_angle", 1e-3),
        refine_levels=g.get("refine_levels", 1),
        seed=sc.seed,
    )
    return atlas, metric, N, plan


# -- serialization --------------------------------------------------------


def _num(x):
    """Numeric payload normalized to 12 significant digits."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return float(f"{x:.12g}")


def _doc(obj):
    if isinstance(obj, dict):
        return {str(k): _doc(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_doc(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_doc(v) for v in obj.tolist()]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (int, np.integer, bool, str)) or obj is None:
        return obj
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    return str(obj)


def record_doc(rec):
    doc = {
        "theta": _doc(rec.ray.theta),
        "psi": _doc(rec.ray.psi),
        "rho": _num(rec.rho) if not np.isnan(rec.rho) else "nan",
        "lambda": _num(rec.lam) if not np.isnan(rec.lam) else "nan",
        "horizon_limited": bool(rec.horizon_limited),
        "unbounded": bool(rec.unbounded),
        "cut_point": None, "tangent_cut": None,
        "class": sorted(rec.classification),
        "competitor": None,
    }
    if rec.cut_point is not None:
        doc["cut_point"] = [rec.cut_point[0]] + _doc(rec.cut_point[1])
        doc["tangent_cut"] = _doc(rec.rho * rec.ray.v)
    if rec.competitor is not None:
        ray, t = rec.competitor
        doc["competitor"] = {"theta": _doc(ray.theta), "psi": _doc(ray.psi),
                             "t": _num(t)}
    return doc


def records_csv(records, dim):
    kmax = max((len(r.ray.theta) for r in records), default=0)
    cmax = max((len(r.ray.psi) for r in records), default=1)
    head = ([f"theta{i+1}" for i in range(kmax)]
            + [f"psi{i+1}" for i in range(cmax)]
            + ["rho", "lambda"]
            + [f"x{i+1}" for i in range(dim)] + ["class"])
    lines = [",".join(head)]
    for r in records:
        row = [f"{v:.12g}" for v in r.ray.theta]
        row += [f"{v:.12g}" for v in r.ray.psi]
        row += [f"{r.rho:.12g}", f"{r.lam:.12g}"]
        if r.cut_point is not None:
            row += [f"{v:.12g}" for v in r.cut_point[1]]
        else:
            row += [""] * dim
        row.append("|".join(sorted(r.classification)))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _svg_polyline(points, color, width=0.01):
    pts = " ".join(f"{p[0]:.6g},{p[1]:.6g}" for p in points)
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" />')


def records_svg(atlas, N, records):
    """Plain SVG 1.1 diagram of N, the cut points, and a few geodesics."""
    pts = [r.cut_point[1] for r in records if r.cut_point is not None]
    npts = []
    if N.k > 0:
        thetas = np.linspace(N.theta_box[0], N.theta_box[1], 181)
        npts = [N.point(np.atleast_1d(t)) for t in thetas]
    else:
        npts = [N.point(np.zeros(0))]
    allp = [np.asarray(p) for p in pts] + [np.asarray(p) for p in npts]
    if not allp:
        allp = [np.zeros(2)]
    arr = np.array(allp)
    lo = arr.min(axis=0) - 0.3
    hi = arr.max(axis=0) + 0.3
    w, h = hi - lo
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{lo[0]:.4g} {lo[1]:.4g} {w:.4g} {h:.4g}" '
        f'width="480" height="480">',
        f'<g transform="translate(0,{(lo[1] + hi[1]):.6g}) scale(1,-1)">',
    ]
    if len(npts) > 1:
        parts.append(_svg_polyline(npts, "#336699", 0.012))
    else:
        p = npts[0]
        parts.append(f'<circle cx="{p[0]:.6g}" cy="{p[1]:.6g}" r="0.02" '
                     f'fill="#336699" />')
    for p in pts:
        parts.append(f'<circle cx="{p[0]:.6g}" cy="{p[1]:.6g}" r="0.008" '
                     f'fill="#cc3333" />')
    parts.append("</g></svg>")
    return "\n".join(parts) + "\n"


# -- task runners ---------------------------------------------------------


def _probe_points(field, records, rng, count, lo=0.15, hi=0.85):
    """Off-cut probe points along finite-rho rays, with their records."""
    finite = [r for r in records
              if r.cut_point is not None and np.isfinite(r.rho)]
    probes = []
    while len(probes) < count and finite:
        rec = finite[rng.integers(len(finite))]
        u = rng.uniform(lo, hi)
        from .cutlocus import _ray_index
        i = _ray_index(field, rec.ray)
        t = u * rec.rho
        probes.append((field.path(i, max(t, 1e-9)).position(t), rec, t))
    return probes


def _task_validate(metric, plan):
    rep = validate_metric(metric, ValidationPlan(seed=plan.seed))
    return {
        "passed": bool(rep.passed),
        "homogeneity_max": _num(rep.homogeneity_max),
        "min_eigenvalue": _num(rep.min_eigenvalue),
        "cartan_contraction_max": _num(rep.cartan_contraction_max),
        "reversibility_max": _num(rep.reversibility_max),
        "identity_max": _num(rep.identity_max),
        "failures": list(rep.failures),
    }, not rep.passed


def _task_cutlocus(metric, N, plan, side):
    records = cut_locus(metric, N, plan=plan, classify=False, side=side)
    finite = [r.rho for r in records if np.isfinite(r.rho)]
    doc = {
        "n_records": len(records),
        "n_finite": len(finite),
        "rho_min": _num(min(finite)) if finite else None,
        "rho_max": _num(max(finite)) if finite else None,
        "records": [record_doc(r) for r in records],
    }
    return records, doc


def _task_classify(field, records):
    violations = []
    for rec in records:
        if rec.cut_point is None:
            continue
        field.classify(rec)
        if not rec.classification:
            violations.append(rec.diagnostics.get("violation", "empty"))
    hist = {}
    for rec in records:
        key = "+".join(sorted(rec.classification)) or "(none)"
        hist[key] = hist.get(key, 0) + 1
    return {"histogram": hist, "violations": violations}, bool(violations)


def _task_retracts(metric, N, field, records, plan, rng, n_probes=50):
    worst_n0 = worst_n1 = worst_c0 = worst_c1 = 0.0
    traces = []
    atlas = metric.atlas
    for k, (q, rec, t) in enumerate(
            _probe_points(field, records, rng, n_probes)):
        p0 = topo_mod.retract_to_N(metric, N, q, 0.0, plan)
        worst_n0 = max(worst_n0, atlas.coord_distance(p0, q))
        p1 = topo_mod.retract_to_N(metric, N, q, 1.0, plan)
        inv = topo_mod.inverse_normal_exp(metric, N, q, plan)
        base = (inv.ray.chart, inv.ray.x)
        worst_n1 = max(worst_n1, atlas.coord_distance(p1, base))
        c0 = topo_mod.retract_to_cut(metric, N, q, 0.0, plan)
        worst_c0 = max(worst_c0, atlas.coord_distance(c0, q))
        c1 = topo_mod.retract_to_cut(metric, N, q, 1.0, plan)
        worst_c1 = max(worst_c1, atlas.coord_distance(c1, rec.cut_point))
        if k < 3:
            traces.append([(s, c, list(x)) for s, c, x in
                           topo_mod.homotopy_trace(metric, N, q, "N",
                                                   plan=plan)])
    fixed_cut = atlas.coord_distance(
        topo_mod.retract_to_cut(metric, N, records[0].cut_point, 0.7, plan),
        records[0].cut_point)
    doc = {
        "n_probes": n_probes,
        "retract_to_N_s0_max": _num(worst_n0),
        "retract_to_N_s1_max": _num(worst_n1),
        "retract_to_cut_s0_max": _num(worst_c0),
        "retract_to_cut_s1_max": _num(worst_c1),
        "cut_point_fixed_residual": _num(fixed_cut),
        "traces": _doc(traces),
    }
    bad = max(worst_n0, worst_n1, worst_c0, worst_c1, fixed_cut) > 1e-5
    return doc, bad


def _task_dfcheck(metric, N, field, records, plan, rng, n_probes=24):
    if records is None:
        # point sources without a cut-locus task: probe a disk around N
        base = field.rays[0].x
        probes = []
        for _ in range(n_probes):
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0.2, 1.2)
            probes.append(((0, base + rad * np.array([np.cos(ang),
                                                      np.sin(ang)])),
                           None, rad))
    else:
        probes = _probe_points(field, records, rng, n_probes, lo=0.1, hi=0.8)
    worst = 0.0
    rows = []
    for q, _, _ in probes:
        angs = rng.uniform(0, 2 * np.pi, 3)
        dirs = [np.array([np.cos(a), np.sin(a)]) for a in angs]
        rep = topo_mod.check_first_variation(metric, N, q, dirs, plan=plan)
        worst = max(worst, rep.max_deviation)
        rows.append({"q": _doc(q[1]), "max_dev": _num(rep.max_deviation)})
    return ({"n_probes": len(probes), "max_deviation": _num(worst),
             "probes": rows}, worst > 1e-4)


def _task_loops(metric, N, plan, records):
    try:
        res = loops_mod.find_geodesic_loop(metric, N, plan, records=records)
    except ReversibilityError as exc:
        return {"branch": "rejected-irreversible", "error": str(exc)}, False
    doc = {
        "branch": res.branch,
        "x0": [res.x0[0]] + _doc(np.asarray(res.x0[1])),
        "d_min": _num(res.d_min),
        "length": _num(res.length),
        "smoothness_residual": _num(res.smoothness_residual),
        "midpoint_gap": _num(res.midpoint_gap),
        "loop_csv_rows": len(res.loop),
    }
    loop_csv = None
    if res.loop:
        lines = ["s,chart," + ",".join(
            f"x{i+1}" for i in range(metric.atlas.dim))]
        for t, c, x in res.loop:
            lines.append(f"{t:.12g},{c}," + ",".join(f"{v:.12g}" for v in x))
        loop_csv = "\n".join(lines) + "\n"
    bad = res.branch == "loop" and (res.smoothness_residual > 1e-4
                                    or res.midpoint_gap > 1e-5)
    return doc, bad, loop_csv


def _task_theorems(metric, N, plan, records, side, atlas):
    reports = []
    reports.append(check_rho_leq_lambda(records))
    classified = [r for r in records if r.classification]
    if classified:
        reports.append(check_se_dense(records, atlas=atlas))
    if plan.refine_levels > 1:
        import copy
        coarse_plan = copy.copy(plan)
        coarse_plan.theta_count = max(1, plan.theta_count // 2)
        coarse_plan.psi_count = max(1, plan.psi_count // 2)
        coarse = cut_locus(metric, N, plan=coarse_plan, classify=False,
                           side=side)
        reports.append(check_rho_continuity([coarse, records]))
    doc = [{"name": r.name, "passed": bool(r.passed),
            "detail": _doc(r.detail)} for r in reports]
    return doc, any(not r.passed for r in reports)


# -- orchestration --------------------------------------------------------


@dataclass
class OutputBundle:
    scenario: Scenario
    documents: dict = dc_field(default_factory=dict)
    files: dict = dc_field(default_factory=dict)      # name -> text payload
    errors: list = dc_field(default_factory=list)
    violations: bool = False
    numerical_failure: bool = False
    wall_time: float = 0.0
    manifest: dict = dc_field(default_factory=dict)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        hashes = {}
        for name, payload in self.files.items():
            path = out / name
            path.write_text(payload)
            hashes[name] = hashlib.sha256(payload.encode()).hexdigest()
        self.manifest["files"] = hashes
        man = json.dumps(self.manifest, indent=2, sort_keys=True) + "\n"
        (out / "manifest.json").write_text(man)
        return out


def summary_document(bundle: OutputBundle) -> dict:
    """Stable numeric summary used for golden-file comparison."""
    keep = {}
    for task, doc in bundle.documents.items():
        if task == "cutlocus":
            keep[task] = {k: v for k, v in doc.items() if k != "records"}
            keep[task]["rho_values"] = [r["rho"] for r in doc["records"]]
            keep[task]["lambda_values"] = [r["lambda"]
                                           for r in doc["records"]]
        elif task == "retracts":
            keep[task] = {k: v for k, v in doc.items() if k != "traces"}
        elif task == "dfcheck":
            keep[task] = {k: v for k, v in doc.items() if k != "probes"}
        else:
            keep[task] = doc
    return {"name": bundle.scenario.name, "seed": bundle.scenario.seed,
            "tasks": keep}


def run_scenario(sc: Scenario, out_dir=None, jobs=1, refine=None):
    """Execute the scenario's tasks in order with shared caches."""
    t_start = time.time()
    if refine is not None:
        sc.grids["refine_levels"] = refine
    atlas, metric, N, plan = build_geometry(sc)
    rng = np.random.default_rng(sc.seed)
    side = sc.grids.get("side")
    bundle = OutputBundle(sc)
    records = None
    field = None

    for task in sc.tasks:
        try:
            if task == "validate":
                doc, bad = _task_validate(metric, plan)
                bundle.documents[task] = doc
                bundle.violations |= bad
            elif task == "cutlocus":
                records, doc = _task_cutlocus(metric, N, plan, side)
                field = get_field(metric, N, plan)
                bundle.documents[task] = doc
                bundle.files[f"{sc.name}_cutlocus.csv"] = records_csv(
                    records, atlas.dim)
                if atlas.dim == 2 and "svg" in sc.output.get("formats", []):
                    bundle.files[f"{sc.name}_cutlocus.svg"] = records_svg(
                        atlas, N, records)
            elif task == "classify":
                if records is None:
                    raise ScenarioError("classify requires cutlocus first")
                doc, bad = _task_classify(field, records)
                bundle.documents[task] = doc
                bundle.violations |= bad
            elif task == "retracts":
                if records is None:
                    raise ScenarioError("retracts requires cutlocus first")
                doc, bad = _task_retracts(metric, N, field, records, plan,
                                          rng)
                bundle.documents[task] = doc
                bundle.violations |= bad
            elif task == "dfcheck":
                if field is None:
                    field = get_field(metric, N, plan)
                doc, bad = _task_dfcheck(metric, N, field, records, plan,
                                         rng)
                bundle.documents[task] = doc
                bundle.violations |= bad
            elif task == "loops":
                got = _task_loops(metric, N, plan, records)
                doc, bad = got[0], got[1]
                if len(got) > 2 and got[2]:
                    bundle.files[f"{sc.name}_loop.csv"] = got[2]
                bundle.documents[task] = doc
                bundle.violations |= bad
            elif task == "theorems":
                if records is None:
                    records, doc0 = _task_cutlocus(metric, N, plan, side)
                    field = get_field(metric, N, plan)
                doc, bad = _task_theorems(metric, N, plan, records, side,
                                          atlas)
                bundle.documents[task] = doc
                bundle.violations |= bad
        except ScenarioError:
            raise
        except FinslerError as exc:
            bundle.errors.append({"task": task, "error": repr(exc)})
            bundle.numerical_failure = True
        except Exception as exc:   # defensive: record, do not crash the run
            bundle.errors.append({"task": task, "error": repr(exc)})
            bundle.numerical_failure = True

    bundle.wall_time = time.time() - t_start
    summary = summary_document(bundle)
    bundle.files[f"{sc.name}_summary.json"] = (
        json.dumps(_doc(summary), indent=2, sort_keys=True) + "\n")
    for task, doc in bundle.documents.items():
        bundle.files[f"{sc.name}_{task}.json"] = (
            json.dumps(_doc(doc), indent=2, sort_keys=True) + "\n")
    bundle.manifest = {
        "scenario": sc.name,
        "seed": sc.seed,
        "schema_version": SCHEMA_VERSION,
        "package_version": _pkg_version,
        "numpy": np.__version__,
        "wall_time_s": round(bundle.wall_time, 3),
        "errors": bundle.errors,
        "violations": bundle.violations,
    }
    if out_dir is not None:
        bundle.write(out_dir)
    return bundle


# -- golden summaries -----------------------------------------------------


def golden_dir():
    return Path(__file__).parent / "golden"


def golden_path(name):
    return golden_dir() / f"{name}.json"


def _compare(a, b, path, rtol, diffs):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                diffs.append(f"{path}/{k}: missing")
            else:
                _compare(a[k], b[k], f"{path}/{k}", rtol, diffs)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            diffs.append(f"{path}: length {len(a)} vs {len(b)}")
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _compare(x, y, f"{path}/{i}", rtol, diffs)
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        if not math.isclose(float(a), float(b), rel_tol=rtol,
                            abs_tol=rtol):
            diffs.append(f"{path}: {a} vs {b}")
    elif a != b:
        diffs.append(f"{path}: {a!r} vs {b!r}")


def compare_to_golden(summary, name, rtol=1e-9):
    path = golden_path(name)
    if not path.exists():
        return [f"no golden summary for {name}"]
    golden = json.loads(path.read_text())
    diffs = []
    _compare(_doc(summary), golden, "", rtol, diffs)
    return diffs


def write_golden(summary, name):
    golden_dir().mkdir(exist_ok=True)
    golden_path(name).write_text(
        json.dumps(_doc(summary), indent=2, sort_keys=True) + "\n")
