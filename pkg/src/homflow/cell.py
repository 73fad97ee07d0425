"""Cell problems: representatives of a tensor, minimal energies and the homogenized density.

A representative of ``j`` on a box ``A`` is a field on the eps-graph that is
divergence free and agrees with the canonical field ``R_eps j`` on every
edge within ``eps R_b`` of the complement of ``A``. The cell value is the
minimal localized energy over representatives; divided by the volume of
``A`` it converges to ``f_hom(j)`` as ``eps -> 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import DiscreteField, VertexMeasure, dive, embedded_mass, embedded_tv, hat
from .correctors import build_corrector
from .energy import EdgeCostFamily, LocalizedEnergy
from .errors import EtaOutOfRange
from .flow_solver import FlowProblem, cycle_space, solve_convex, solve_nonconvex
from .geometry import Box, EmbeddedGraph, RestrictedGraph, region_dist_to_complement, restrict_rescale
from .measures import AtomicMeasure, kr_tilde
from .uniform_flow import UniformFlowOperator, apply_rescaled


# ---------------------------------------------------------------------------
# representatives
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RepresentativeSet:
    op: UniformFlowOperator
    j: np.ndarray
    region: Box
    eps: float
    boundary_margin: float
    restricted: RestrictedGraph
    canonical: DiscreteField
    pinned: np.ndarray
    free_edges: np.ndarray

    @property
    def graph(self) -> EmbeddedGraph:
        return self.restricted.graph

    @property
    def r_lip(self) -> float:
        return self.op.certificate.r3

    def target(self) -> VertexMeasure:
        """Divergence of the canonical field; zero at every vertex touching a free edge."""
        return dive(self.canonical)

    def problem(self, costs: EdgeCostFamily) -> FlowProblem:
        energy = LocalizedEnergy(self.restricted, costs, r_lip=self.r_lip)
        return FlowProblem(energy, self.target(), self.region, self.pinned, self.canonical.values[self.pinned])


def _tensor(j, dim: int) -> np.ndarray:
    j = np.asarray(j, float)
    if j.ndim == 1:
        j = j[None, :]
    if j.shape[1] != dim:
        raise ValueError(f"tensor must have {dim} columns")
    return j


def make_representative_set(op: UniformFlowOperator, j, A: Box, eps: float,
                            r_boundary: float | None = None) -> RepresentativeSet:
    """Pin every edge within ``eps R_b`` of the complement of ``A`` to ``R_eps j``.

    ``R_b`` defaults to ``max(R_Lip, R3)`` with ``R_Lip = R3``. The graph keeps
    all vertices within ``eps R3`` of ``A``, so every edge meeting ``A`` is present.
    """
    cert = op.certificate
    j = _tensor(j, op.dim)
    rb = cert.r3 if r_boundary is None else float(r_boundary)
    rg = restrict_rescale(op.graph, eps, A.enlarged(eps * cert.r3))
    canonical = apply_rescaled(op, j, eps, rg)
    g = rg.graph
    dist = region_dist_to_complement(A, g.points[g.edges[:, 0]], g.points[g.edges[:, 1]])
    pinned_mask = dist <= eps * rb
    rs = RepresentativeSet(op, j, A, float(eps), eps * rb, rg, canonical,
                           np.flatnonzero(pinned_mask), np.flatnonzero(~pinned_mask))
    cons = _touching(g, rs.free_edges)
    div = rs.target().values[cons]
    scale = max(1.0, float(np.abs(canonical.values).max(initial=0.0)))
    if np.any(np.abs(div) > 1e-9 * scale):
        raise ValueError("canonical field has divergence inside the cell; enlarge the operator window")
    return rs


def _touching(g: EmbeddedGraph, edge_ids: np.ndarray) -> np.ndarray:
    mask = np.zeros(g.n_vertices, dtype=bool)
    mask[g.edges[edge_ids].ravel()] = True
    return mask


def is_member(rs: RepresentativeSet, J: DiscreteField, tol: float = 1e-9) -> bool:
    """Structural membership: pinned values reproduced and zero divergence off the boundary band."""
    if J.graph is not rs.graph or J.value_dim != rs.canonical.value_dim:
        return False
    scale = max(1.0, float(np.abs(rs.canonical.values).max(initial=0.0)))
    if np.any(np.abs(J.values[rs.pinned] - rs.canonical.values[rs.pinned]) > tol * scale):
        return False
    cons = _touching(rs.graph, rs.free_edges)
    return bool(np.all(np.abs(dive(J).values[cons]) <= tol * scale * max(1, len(rs.free_edges))))


def random_members(rs: RepresentativeSet, count: int, rng=None, amplitude: float | None = None) -> list:
    """Canonical field plus random combinations of free cycles."""
    rng = np.random.default_rng(rng)
    p = rs.problem(EdgeCostFamily("weighted_abs"))
    cs = cycle_space(p)
    base = rs.canonical.values[cs.free]
    amp = rs.eps ** (rs.op.dim - 1) if amplitude is None else amplitude
    out = []
    for _ in range(count):
        theta = rng.normal(scale=amp, size=(cs.k, p.value_dim))
        x = base.copy()
        for c, (idx, sg) in enumerate(cs.cycles):
            x[idx] += sg[:, None] * theta[c][None, :]
        out.append(p.assemble(x))
    return out


# ---------------------------------------------------------------------------
# cell values
# ---------------------------------------------------------------------------

@dataclass
class CellValue:
    j: np.ndarray
    region: Box
    eps: float
    value: float
    status: str
    J: DiscreteField
    certified: bool
    log: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"j": self.j.tolist(), "region": self.region.to_dict(), "eps": self.eps, "value": self.value,
                "status": self.status, "certified": self.certified}


def cell_value(rs: RepresentativeSet, costs: EdgeCostFamily, **solver_kw) -> CellValue:
    """Minimal energy on ``rs.region`` over the representatives in ``rs``.

    Convex families are solved exactly; nonconvex values are heuristic upper
    estimates and carry ``certified=False``.
    """
    p = rs.problem(costs)
    if costs.convex:
        sol = solve_convex(p)
    else:
        sol = solve_nonconvex(p, **solver_kw)
    return CellValue(rs.j, rs.region, rs.eps, sol.objective, sol.status, sol.J, costs.convex, sol.solver_log)


def canonical_energy(rs: RepresentativeSet, costs: EdgeCostFamily) -> float:
    return rs.problem(costs).objective(rs.canonical)


def scaling_check(op: UniformFlowOperator, costs: EdgeCostFamily, j, A: Box, eps: float) -> tuple[float, float]:
    """``(f_eps(j, A), eps^d f_1(j, A / eps))`` on the same base graph and operator."""
    lhs = cell_value(make_representative_set(op, j, A, eps), costs).value
    rhs = eps ** op.dim * cell_value(make_representative_set(op, j, A.scaled(1 / eps), 1.0), costs).value
    return lhs, rhs


# ---------------------------------------------------------------------------
# homogenized density
# ---------------------------------------------------------------------------

@dataclass
class HomEstimate:
    j: np.ndarray
    eps_list: list
    values: list
    f_hom: float
    slope: float
    residual: float
    fingerprint: str
    certified: bool

    def to_dict(self) -> dict:
        return {"j": self.j.tolist(), "eps": list(self.eps_list), "values": list(self.values),
                "f_hom": self.f_hom, "slope": self.slope, "residual": self.residual,
                "fingerprint": self.fingerprint, "certified": self.certified}

    def rows(self) -> list[dict]:
        return [{"eps": e, "value": v, "extrapolated": self.f_hom, "residual": self.residual}
                for e, v in zip(self.eps_list, self.values)]


def extrapolate(eps_list, values) -> tuple[float, float, float]:
    """Least-squares fit ``value = f + a eps``; returns ``(f, a, rms residual)``."""
    e = np.asarray(eps_list, float)
    v = np.asarray(values, float)
    A = np.stack([np.ones_like(e), e], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = v - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res ** 2)))


def estimate_fhom(op: UniformFlowOperator, costs: EdgeCostFamily, j, eps_list, A: Box | None = None,
                  **solver_kw) -> HomEstimate:
    """Per-volume cell values at each scale and their affine-in-eps extrapolation."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("need at least three strictly decreasing scales")
    A = Box.cube(1.0, op.dim) if A is None else A
    j = _tensor(j, op.dim)
    values = []
    for eps in eps_list:
        cv = cell_value(make_representative_set(op, j, A, eps), costs, **solver_kw)
        values.append(cv.value / A.volume)
    f, a, res = extrapolate(eps_list, values)
    return HomEstimate(j, eps_list, values, f, a, res, op.fingerprint(), costs.convex)


def operator_mass_constant(op: UniformFlowOperator, eps: float, A: Box) -> float:
    """``M`` with ``|iota R_eps h|(A) <= M |A| |h|`` for all ``h`` (via the basis tensors)."""
    d = op.dim
    per_axis = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        rs = make_representative_set(op, e, A, eps)
        per_axis.append(embedded_tv(rs.canonical, A) / A.volume)
    return float(np.sqrt(np.sum(np.square(per_axis))))


def fhom_properties_check(fhat, js, c2: float, lip: float, tol: float, pairs=None,
                          one_homogeneous: bool = False, even: bool = False) -> dict:
    """Growth, Lipschitz and (for 1-homogeneous scalar costs) norm properties of ``fhat``.

    ``fhat(j)`` returns an estimate of ``f_hom(j)``. Each check records the
    worst violation, so a report passes when every entry is at most ``tol``.
    """
    js = [np.asarray(j, float).reshape(-1) for j in js]
    vals = [fhat(j) for j in js]
    report = {}
    report["growth"] = max(c2 * np.linalg.norm(j) - v for j, v in zip(js, vals))
    lips = [abs(vals[a] - vals[b]) - lip * np.linalg.norm(js[a] - js[b])
            for a in range(len(js)) for b in range(a + 1, len(js))]
    report["lipschitz"] = max(lips, default=-np.inf)
    report["zero"] = abs(fhat(np.zeros_like(js[0])))
    if pairs is not None:
        pairs = [(np.asarray(a, float).reshape(-1), np.asarray(b, float).reshape(-1)) for a, b in pairs]
        if one_homogeneous:
            report["triangle"] = max(fhat(a + b) - fhat(a) - fhat(b) for a, b in pairs)
            report["homogeneity"] = max(abs(fhat(2 * a) - 2 * fhat(a)) for a, _ in pairs)
        report["midpoint_convexity"] = max(fhat(0.5 * (a + b)) - 0.5 * (fhat(a) + fhat(b)) for a, b in pairs)
    if even:
        report["symmetry"] = max(abs(fhat(-j) - v) for j, v in zip(js, vals))
    report = {k: float(v) for k, v in report.items()}
    report["passed"] = all(v <= tol for v in report.values())
    report["tol"] = tol
    return report


# ---------------------------------------------------------------------------
# boundary enforcement
# ---------------------------------------------------------------------------

def cube_cutoff(A: Box, eta: float, ell: int = 1):
    """Lipschitz cutoff: 1 on the cube scaled by ``1 - 2 ell eta``, 0 outside ``1 - (2 ell - 1) eta``."""
    c = A.center
    half = 0.5 * A.sides

    def psi(x):
        t = np.max(np.abs(np.atleast_2d(x) - c) / half, axis=1)
        inner, outer = 1 - 2 * ell * eta, 1 - (2 * ell - 1) * eta
        return np.clip((outer - t) / (outer - inner), 0.0, 1.0)

    return psi


def eta_window(rs: RepresentativeSet, J: DiscreteField) -> tuple[float, float]:
    """Open interval of admissible cutoff widths for ``J``."""
    lo = max(rs.boundary_margin, rs.eps * rs.r_lip)
    mass = embedded_tv(J, rs.region)
    jn = float(np.linalg.norm(rs.j))
    hi = 1 / 3 if mass == 0 else min(1 / 3, (1 + jn) / 16 * rs.region.volume / mass)
    return lo, hi


def _vertex_kr(g: EmbeddedGraph, values: np.ndarray, mask: np.ndarray, x0) -> float:
    idx = np.flatnonzero(mask & (np.abs(values).max(axis=1) > 0))
    if len(idx) == 0:
        return 0.0
    return kr_tilde(AtomicMeasure(g.points[idx], values[idx], x0))


def _segment_kr(J: DiscreteField, A: Box) -> float:
    """Tilde-KR norm of ``iota J`` on ``A``; each clipped segment is lumped at its midpoint."""
    g = J.graph
    a, b = g.points[g.edges[:, 0]], g.points[g.edges[:, 1]]
    w = A.clip_lengths(a, b)
    keep = np.flatnonzero((w > 0) & (np.abs(J.values).max(axis=1) > 0))
    if len(keep) == 0:
        return 0.0
    t0, t1 = A.clip_params(a[keep], b[keep])
    mid = a[keep] + (0.5 * (t0 + t1))[:, None] * (b[keep] - a[keep])
    dens = (J.values[keep][:, :, None] * g.tangents[keep][:, None, :]).reshape(len(keep), -1)
    return kr_tilde(AtomicMeasure(mid, dens * w[keep, None], A.center))


def error_functional(rs: RepresentativeSet, J: DiscreteField, eta: float) -> dict:
    """Terms of the error functional controlling the cost of turning ``J`` into a representative."""
    A, eps, g = rs.region, rs.eps, rs.graph
    closed = A.contains(g.points, closed=True)
    div = dive(J).values
    tv_J = embedded_tv(J, A)
    jn = float(np.linalg.norm(rs.j))
    vol = A.volume
    terms = {
        "div_kr": _vertex_kr(g, div, closed, A.center) / eta,
        "distance_kr": _segment_kr(J - rs.canonical, A) / eta ** 2,
        "cutoff": np.sqrt(eta) * ((1 + jn) * vol + tv_J),
        "discreteness": eps * (jn * vol + float(np.linalg.norm(div[closed], axis=1).sum()) + tv_J / eta),
    }
    terms = {k: float(v) for k, v in terms.items()}
    terms["total"] = sum(terms.values())
    return terms


@dataclass
class EnforceResult:
    J: DiscreteField
    energy_before: float
    energy_after: float
    err: dict
    ell: int
    member: bool
    corrector_tv: float

    @property
    def increase(self) -> float:
        return self.energy_after - self.energy_before

    def to_dict(self) -> dict:
        return {"energy_before": self.energy_before, "energy_after": self.energy_after,
                "increase": self.increase, "err": self.err, "ell": self.ell, "member": self.member,
                "corrector_tv": self.corrector_tv}


def _free_subgraph(g: EmbeddedGraph, free: np.ndarray):
    verts = np.unique(g.edges[free].ravel())
    local = -np.ones(g.n_vertices, dtype=np.int64)
    local[verts] = np.arange(len(verts))
    sub = EmbeddedGraph(g.points[verts], local[g.edges[free]])
    emap = np.array([sub.edge_id(*local[g.edges[e]]) for e in free], dtype=np.int64).reshape(-1, 2)
    return sub, verts, local, emap


def enforce_representative(rs: RepresentativeSet, J: DiscreteField, eta: float, costs: EdgeCostFamily,
                           N: int = 1) -> EnforceResult:
    """Turn ``J`` into a member of ``rs`` by a cutoff blend and a divergence corrector.

    ``J2 = psi J + (1 - psi) R_eps j`` with the edge-averaged cutoff ``psi``
    (set to zero on pinned edges), then ``J3 = J2 + K`` where ``K`` is a
    localized corrector of ``-DIVE(J2 - R_eps j)`` routed on the free edges.
    Among ``ell = 1..N`` the cutoff position with the smallest blended energy
    is used.
    """
    if J.graph is not rs.graph:
        raise ValueError("field does not live on the cell graph")
    lo, hi = eta_window(rs, J)
    if not lo < eta < hi:
        raise EtaOutOfRange(f"eta={eta:.4g} outside ({lo:.4g}, {hi:.4g})")
    if not 2 * N + 1 < 1 / eta:
        raise EtaOutOfRange(f"N={N} too large for eta={eta:.4g}")
    p = rs.problem(costs)
    g = rs.graph
    R = rs.canonical
    best = None
    for ell in range(1, N + 1):
        s = hat(g, cube_cutoff(rs.region, eta, ell))
        s[rs.pinned] = 0.0
        J2 = R + (J - R).times_symmetric(s)
        val = p.objective(J2)
        if best is None or val < best[0]:
            best = (val, ell, J2, s)
    _, ell, J2, s = best
    m = -dive(J2 - R).values
    corr_tv = 0.0
    J3 = J2.copy()
    if np.any(np.abs(m) > 0):
        sub, verts, local, emap = _free_subgraph(g, rs.free_edges)
        msub = VertexMeasure(sub, m[verts])
        res = build_corrector(sub, msub, rs.eps, rs.op.certificate)
        corr_tv = res.tv
        vals = J3.values.copy()
        vals[rs.free_edges] += emap[:, 1, None] * res.J.values[emap[:, 0]]
        J3 = DiscreteField(g, vals, epsilon=rs.eps)
    err = error_functional(rs, J, eta)
    return EnforceResult(J3, p.objective(J), p.objective(J3), err, ell, is_member(rs, J3), corr_tv)


def equal_mass_spread(rs: RepresentativeSet, members: list) -> float:
    """Largest deviation of ``iota J(A)`` across ``members``."""
    masses = np.array([embedded_mass(J, rs.region) for J in members])
    return float(np.abs(masses - masses[0]).max(initial=0.0))
