"""Config-driven experiments: f_hom sweeps, W1 convergence, corrector bounds and property suites.

A configuration is a single JSON document. Every table row carries the
fingerprints of the graph and the costs that produced it, and outputs are
written in a fixed order so that a seeded run is reproducible byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import DiscreteField, Polynomial, VertexMeasure, dive, divergence_pairing_residual, leibniz_residual
from .cell import (equal_mass_spread, estimate_fhom, is_member, make_representative_set, random_members,
                   scaling_check)
from .correctors import build_corrector, trend_statistics
from .energy import EdgeCostFamily, LocalizedEnergy
from .flow_solver import FlowProblem, solve_convex
from .geometry import Box, EmbeddedGraph, GraphSpec, certify_geometry, generate, restrict_rescale
from .measures import AtomicMeasure, kr_tilde, t1_flow
from .uniform_flow import (UniformFlowOperator, build, interior_divergence, standard_test_functions,
                           verify_convergence)

EXPERIMENTS = ("fhom_sweep", "w1_convergence", "corrector_bounds", "operator_check", "property_suite")

SCHEMAS = {
    "fhom_sweep": ["experiment", "seed", "j", "eps", "value", "extrapolated", "residual",
                   "graph_fingerprint", "cost_fingerprint", "operator_fingerprint"],
    "w1_convergence": ["experiment", "seed", "eps", "value", "extrapolated", "predicted", "fit_slope",
                       "graph_fingerprint", "cost_fingerprint"],
    "corrector_bounds": ["experiment", "seed", "eps", "tv", "kr_of_m", "tv_of_m", "bound_ratio",
                         "support_radius", "band_violation", "divergence_error", "graph_fingerprint"],
    "operator_check": ["experiment", "seed", "test_function", "eps", "error", "graph_fingerprint",
                       "operator_fingerprint"],
    "property_suite": ["experiment", "seed", "check", "value", "tolerance", "passed"],
}


@dataclass
class ExperimentConfig:
    experiment: str
    graph: dict = field(default_factory=lambda: {"kind": "lattice_zd", "dim": 2})
    costs: dict = field(default_factory=lambda: {"kind": "weighted_abs"})
    eps_list: list = field(default_factory=lambda: [0.25, 0.125, 0.0625])
    j_list: list = field(default_factory=lambda: [[1.0, 0.0]])
    measures: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    cell: list = field(default_factory=lambda: [[0.0, 0.0], [1.0, 1.0]])
    params: dict = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        self.eps_list = [float(e) for e in self.eps_list]
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if any(not 0 < e <= 1 for e in self.eps_list):
            raise ValueError("every eps must lie in (0, 1]")
        GraphSpec.from_dict(self.graph)
        EdgeCostFamily.from_dict(self.costs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @property
    def cell_box(self) -> Box:
        return Box(tuple(self.cell[0]), tuple(self.cell[1]))

    def graph_spec(self, seed: int) -> GraphSpec:
        data = dict(self.graph)
        data["seed"] = seed
        return GraphSpec.from_dict(data)

    def cost_family(self, seed: int) -> EdgeCostFamily:
        data = dict(self.costs)
        data.setdefault("seed", seed)
        return EdgeCostFamily.from_dict(data)


def cost_fingerprint(costs: EdgeCostFamily) -> str:
    return hashlib.sha256(json.dumps(costs.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def setup_operator(spec: GraphSpec, region: Box, eps_min: float, margin: int = 8,
                   variant: str = "shortest") -> UniformFlowOperator:
    """Base graph, certificate and uniform-flow operator valid for ``region`` down to ``eps_min``."""
    big = region.scaled(1 / eps_min)
    lo = np.floor(np.minimum(big.lo_arr, 0)) - margin
    hi = np.ceil(np.maximum(big.hi_arr, 0)) + margin
    window = Box(tuple(lo), tuple(hi))
    g = generate(spec.covering(window, margin=2))
    cert = certify_geometry(g, window)
    return build(g, cert, window, variant)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_fhom_sweep(cfg: ExperimentConfig) -> dict:
    rows, summary = [], {}
    A = cfg.cell_box
    for seed in cfg.seeds:
        op = setup_operator(cfg.graph_spec(seed), A, cfg.eps_list[-1])
        costs = cfg.cost_family(seed)
        for j in cfg.j_list:
            est = estimate_fhom(op, costs, j, cfg.eps_list, A)
            key = f"seed={seed};j={','.join(f'{v:g}' for v in np.ravel(j))}"
            summary[key] = est.to_dict()
            for r in est.rows():
                rows.append({"experiment": "fhom_sweep", "seed": seed, "j": ",".join(f"{v:g}" for v in np.ravel(j)),
                             **r, "graph_fingerprint": op.graph.fingerprint(),
                             "cost_fingerprint": cost_fingerprint(costs), "operator_fingerprint": est.fingerprint})
    return {"experiment": "fhom_sweep", "rows": rows, "summary": summary}


def project_atoms(g: EmbeddedGraph, atoms, value_dim: int = 1) -> VertexMeasure:
    """Move each ``(point, mass)`` atom to its nearest vertex (ties: lowest index)."""
    vals = np.zeros((g.n_vertices, value_dim))
    for point, mass in atoms:
        p = np.asarray(point, float)
        d = np.linalg.norm(g.points - p, axis=1)
        k = int(np.flatnonzero(d <= d.min() + 1e-12)[0])
        vals[k] += np.atleast_1d(mass)
    return VertexMeasure(g, vals)


def _w1_domain(atoms_plus, atoms_minus, pad: float) -> Box:
    pts = np.array([p for p, _ in atoms_plus] + [p for p, _ in atoms_minus], float)
    return Box(tuple(pts.min(axis=0) - pad), tuple(pts.max(axis=0) + pad))


def w1_value(spec: GraphSpec, costs: EdgeCostFamily, atoms_plus, atoms_minus, eps: float,
             pad: float = 0.5) -> tuple[float, EmbeddedGraph]:
    """Minimal energy of a flux from the projected ``m+`` to the projected ``m-``."""
    dom = _w1_domain(atoms_plus, atoms_minus, pad)
    g = generate(spec.covering(dom.scaled(1 / eps), margin=3))
    rg = restrict_rescale(g, eps, dom)
    m = project_atoms(rg.graph, atoms_plus) - project_atoms(rg.graph, atoms_minus)
    energy = LocalizedEnergy(rg, costs)
    sol = solve_convex(FlowProblem(energy, m))
    return sol.objective, g


def run_w1_convergence(cfg: ExperimentConfig) -> dict:
    """Values of the discrete transport problem across scales and their extrapolated limit.

    For a single dipole with a one-homogeneous cost the limit is predicted
    by ``f_hom(b - a)`` estimated from cell problems on the same environment.
    """
    plus = [(a["point"], a["mass"]) for a in cfg.measures.get("plus", [])]
    minus = [(a["point"], a["mass"]) for a in cfg.measures.get("minus", [])]
    rows, summary = [], {}
    for seed in cfg.seeds:
        spec = cfg.graph_spec(seed)
        costs = cfg.cost_family(seed)
        values, gfp = [], None
        for eps in cfg.eps_list:
            v, g = w1_value(spec, costs, plus, minus, eps, cfg.params.get("pad", 0.5))
            values.append(v)
            gfp = gfp or g.fingerprint()
        e = np.asarray(cfg.eps_list)
        if len(e) >= 2:
            slope, limit = np.polyfit(e, values, 1)
        else:
            slope, limit = 0.0, values[0]
        predicted = None
        if len(plus) == 1 and len(minus) == 1 and costs.one_homogeneous and cfg.params.get("predict", True):
            direction = np.asarray(minus[0][0], float) - np.asarray(plus[0][0], float)
            mass = float(np.ravel(plus[0][1])[0])
            if np.linalg.norm(direction) == 0:
                predicted = 0.0
            else:
                fh_eps = cfg.params.get("fhom_eps", [0.25, 0.125, 0.0625, 0.03125])
                op = setup_operator(spec, Box.cube(1.0, spec.dim), fh_eps[-1])
                predicted = mass * estimate_fhom(op, costs, direction, fh_eps).f_hom
        summary[f"seed={seed}"] = {"values": values, "extrapolated": float(limit), "slope": float(slope),
                                   "predicted": predicted}
        for eps, v in zip(cfg.eps_list, values):
            rows.append({"experiment": "w1_convergence", "seed": seed, "eps": eps, "value": v,
                         "extrapolated": float(limit), "predicted": predicted, "fit_slope": float(slope),
                         "graph_fingerprint": gfp, "cost_fingerprint": cost_fingerprint(costs)})
    return {"experiment": "w1_convergence", "rows": rows, "summary": summary}


def random_zero_mass(g: EmbeddedGraph, n_atoms: int, rng, value_dim: int = 1, mask=None) -> VertexMeasure:
    """Zero-mass measure on ``n_atoms`` distinct random vertices (optionally within ``mask``)."""
    pool = np.arange(g.n_vertices) if mask is None else np.flatnonzero(mask)
    idx = rng.choice(pool, size=min(n_atoms, len(pool)), replace=False)
    v = rng.normal(size=(len(idx), value_dim))
    v -= v.mean(axis=0)
    vals = np.zeros((g.n_vertices, value_dim))
    vals[idx] = v
    return VertexMeasure(g, vals)


def run_corrector_bounds(cfg: ExperimentConfig) -> dict:
    rows = []
    A = cfg.cell_box
    n_atoms = int(cfg.params.get("n_atoms", 6))
    for seed in cfg.seeds:
        spec = cfg.graph_spec(seed)
        g = generate(spec.covering(A.scaled(1 / cfg.eps_list[-1]), margin=4))
        window = Box(tuple(np.floor(A.lo_arr / cfg.eps_list[-1]) - 2), tuple(np.ceil(A.hi_arr / cfg.eps_list[-1]) + 2))
        cert = certify_geometry(g, window)
        rng = np.random.default_rng(seed)
        for eps in cfg.eps_list:
            # paths stay within the band around conv(supp m), so a band-wide collar suffices
            rg = restrict_rescale(g, eps, A.enlarged(2 * eps * (cert.localisation_constant + cert.r3)))
            m = random_zero_mass(rg.graph, n_atoms, rng, mask=A.contains(rg.graph.points))
            res = build_corrector(rg, m, eps, cert)
            err = float(np.linalg.norm(dive(res.J).values - m.values, axis=1).sum())
            rows.append({"experiment": "corrector_bounds", "seed": seed, "eps": eps, "tv": res.tv,
                         "kr_of_m": res.kr_of_m, "tv_of_m": res.tv_of_m, "bound_ratio": res.bound_ratio,
                         "support_radius": res.support_radius, "band_violation": res.band_violation,
                         "divergence_error": err, "graph_fingerprint": g.fingerprint()})
    ratios = [r["bound_ratio"] for r in rows]
    summary = {"max_ratio": max(ratios, default=0.0), **trend_statistics([r["eps"] for r in rows], ratios),
               "max_band_violation": max((r["band_violation"] for r in rows), default=0.0),
               "max_divergence_error": max((r["divergence_error"] for r in rows), default=0.0)}
    return {"experiment": "corrector_bounds", "rows": rows, "summary": summary}


def run_operator_check(cfg: ExperimentConfig) -> dict:
    rows, summary = [], {}
    for seed in cfg.seeds:
        spec = cfg.graph_spec(seed)
        op = setup_operator(spec, Box.cube(1.0, spec.dim), cfg.eps_list[-1])
        d = spec.dim
        basis = np.eye(d)
        summary[f"seed={seed}"] = {"interior_divergence": max(interior_divergence(op, e) for e in basis)}
        for j in cfg.j_list:
            for k, phi in enumerate(standard_test_functions(d)):
                for r in verify_convergence(op, j, phi, cfg.eps_list):
                    rows.append({"experiment": "operator_check", "seed": seed, "test_function": k,
                                 "eps": r["eps"], "error": r["error"], "graph_fingerprint": op.graph.fingerprint(),
                                 "operator_fingerprint": op.fingerprint()})
    return {"experiment": "operator_check", "rows": rows, "summary": summary}


# ---------------------------------------------------------------------------
# property suite
# ---------------------------------------------------------------------------

def antisymmetry_defect(items: dict) -> float:
    """``max |J(x,y) + J(y,x)|`` over a dictionary of directed values."""
    worst = 0.0
    for (x, y), v in items.items():
        if (y, x) in items:
            worst = max(worst, float(np.max(np.abs(np.asarray(v) + np.asarray(items[(y, x)])))))
    return worst


def _directed_items(J: DiscreteField) -> dict:
    items = {}
    for (u, v), val in zip(J.graph.edges.tolist(), J.values):
        items[(u, v)] = val.copy()
        items[(v, u)] = -val
    return items


def run_property_suite(cfg: ExperimentConfig) -> dict:
    """Evaluate every registered invariant at desk size; failures are reported, not raised."""
    size = int(cfg.params.get("size", 8))
    corrupt = set(cfg.params.get("corrupt", []))
    rows = []

    def record(seed, name, value, tol):
        rows.append({"experiment": "property_suite", "seed": seed, "check": name, "value": float(value),
                     "tolerance": tol, "passed": bool(value <= tol)})

    for seed in cfg.seeds:
        rng = np.random.default_rng(seed)
        spec = GraphSpec.from_dict({**cfg.graph, "seed": seed, "period_hint": size})
        g = generate(spec)
        J = DiscreteField(g, rng.normal(size=(g.n_edges, 1)))
        items = _directed_items(J)
        if "antisymmetry" in corrupt:
            key = next(iter(items))
            items[key] = items[key] + 1.0
        record(seed, "antisymmetry", antisymmetry_defect(items), 1e-12)
        psi = rng.normal(size=g.n_vertices)
        record(seed, "leibniz", leibniz_residual(J, psi), 1e-10)
        Psi = Polynomial.random(g.dim, 2, shape=(1,), rng=rng)
        record(seed, "divergence_pairing", divergence_pairing_residual(J, Psi), 1e-10)
        record(seed, "divergence_total_mass", abs(float(dive(J).total()[0])), 1e-10)
        # corrector divergence and band
        box = Box.cube(float(size - 1), g.dim, corner=spec.origin)
        cert = certify_geometry(g, box, samples=None)
        m = random_zero_mass(g, 6, rng)
        res = build_corrector(g, m, 1.0, cert)
        record(seed, "corrector_divergence", float(np.abs(dive(res.J).values - m.values).sum()), 1e-10)
        record(seed, "corrector_band", res.band_violation, 0.0)
        # transport duality: tilde-KR of a zero-mass scalar measure equals its T1 cost
        am = AtomicMeasure.from_vertex_measure(m)
        record(seed, "kr_tilde_t1", abs(kr_tilde(am) - sum(p.cost for p in t1_flow(am))), 1e-8)
        # cell-level invariants
        A = Box.cube(1.0, g.dim)
        op = setup_operator(GraphSpec.from_dict({**cfg.graph, "seed": seed}), A, 0.25, margin=4)
        record(seed, "uniform_flow_interior_divergence", max(interior_divergence(op, e) for e in np.eye(g.dim)), 0.0)
        j = rng.normal(size=g.dim)
        rs = make_representative_set(op, j, A, 0.25)
        members = random_members(rs, 5, rng)
        record(seed, "representative_membership", float(not all(is_member(rs, M) for M in members)), 0.0)
        record(seed, "equal_mass", equal_mass_spread(rs, members), 1e-10)
        costs = cfg.cost_family(seed)
        if costs.convex:
            lhs, rhs = scaling_check(op, costs, j, A, 0.5)
            record(seed, "scaling", abs(lhs - rhs) / max(abs(lhs), 1e-300), 1e-8)
    passed = all(r["passed"] for r in rows)
    return {"experiment": "property_suite", "rows": rows, "summary": {"passed": passed, "n_checks": len(rows)}}


RUNNERS = {
    "fhom_sweep": run_fhom_sweep,
    "w1_convergence": run_w1_convergence,
    "corrector_bounds": run_corrector_bounds,
    "operator_check": run_operator_check,
    "property_suite": run_property_suite,
}


def run(cfg: ExperimentConfig) -> dict:
    return RUNNERS[cfg.experiment](cfg)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def to_csv(results: dict) -> str:
    cols = SCHEMAS[results["experiment"]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in results["rows"]:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def to_gnuplot(results: dict) -> str:
    """Whitespace-separated numeric columns with a commented header."""
    cols = [c for c in SCHEMAS[results["experiment"]] if c not in ("experiment",) and "fingerprint" not in c]
    lines = ["# " + " ".join(cols)]
    for r in results["rows"]:
        lines.append(" ".join(_fmt(r.get(c)).replace(",", ";") or "nan" for c in cols))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def summary_json(results: dict) -> str:
    return json.dumps(_jsonable(results), sort_keys=True, indent=1)


def emit_outputs(results: dict, out_dir: str, name: str | None = None) -> dict:
    """Write ``<name>.csv``, ``<name>.json`` and ``<name>.dat`` into ``out_dir``."""
    name = name or results["experiment"]
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for ext, text in (("csv", to_csv(results)), ("json", summary_json(results)), ("dat", to_gnuplot(results))):
        path = os.path.join(out_dir, f"{name}.{ext}")
        with open(path, "w") as fh:
            fh.write(text)
        paths[ext] = path
    return paths
