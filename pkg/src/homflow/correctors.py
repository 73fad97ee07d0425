"""Divergence correctors: fields with prescribed divergence and controlled mass.

Each scalar component of ``m`` is transported optimally from its negative to
its positive part; every plan atom is realised by a unit flux along a path
that stays in a band of width ``C eps`` around the straight segment joining
its endpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .calculus import DiscreteField, VertexMeasure, dive, embedded_tv, path_flux_values
from .errors import AnchorMissing, MassImbalance
from .geometry import EmbeddedGraph, GeometryCertificate, RestrictedGraph, shortest_path
from .measures import AtomicMeasure, kr_tilde, scalar_w1_plan


def band_constant(cert: GeometryCertificate) -> float:
    """``R2 (R1 + 1/2) + R1``: width of the band around ``[x, y]`` in units of ``eps``."""
    return cert.localisation_constant


def erase_loops(path: list) -> list:
    """Chronological loop erasure: on revisiting a vertex, cut back to its first visit."""
    out: list = []
    pos: dict = {}
    for v in path:
        if v in pos:
            cut = pos[v]
            for w in out[cut + 1:]:
                del pos[w]
            out = out[:cut + 1]
        else:
            pos[v] = len(out)
            out.append(v)
    return out


def localized_path(g: EmbeddedGraph, x: int, y: int, eps: float, r1: float) -> list:
    """Simple path from ``x`` to ``y`` that stays close to the segment ``[x, y]``.

    Waypoints are placed on the segment at spacing ``eps r1``, each is
    replaced by its nearest vertex (which must lie within ``eps r1``),
    consecutive anchors are joined by shortest paths and loops are erased.
    """
    x, y = int(x), int(y)
    px, py = g.points[x], g.points[y]
    dist = float(np.linalg.norm(py - px))
    step = eps * r1
    if dist <= step:
        return shortest_path(g, x, y)
    m = int(np.floor(dist / step))
    ts = np.arange(1, m) * step / dist
    anchors = [x]
    if len(ts):
        way = px[None, :] + ts[:, None] * (py - px)[None, :]
        dd, idx = g.kdtree.query(way, k=min(4, g.n_vertices))
        dd = np.atleast_2d(dd.reshape(len(way), -1))
        idx = np.atleast_2d(idx.reshape(len(way), -1))
        for w in range(len(way)):
            if dd[w, 0] > step + 1e-12:
                raise AnchorMissing(f"no vertex within {step:.3g} of waypoint {way[w].tolist()}")
            tied = idx[w][dd[w] <= dd[w, 0] + 1e-12]
            anchors.append(int(tied.min()))
    anchors.append(y)
    glued = [x]
    for a, b in zip(anchors[:-1], anchors[1:]):
        if a == b:
            continue
        glued.extend(shortest_path(g, a, b)[1:])
    return erase_loops(glued)


def _segment_distance(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    if L2 == 0:
        return np.linalg.norm(q - a, axis=1)
    t = np.clip((q - a) @ d / L2, 0.0, 1.0)
    return np.linalg.norm(q - (a + t[:, None] * d[None, :]), axis=1)


def hull_distance(points: np.ndarray, hull_pts: np.ndarray) -> np.ndarray:
    """Distance of each point to the convex hull of ``hull_pts`` (exact for d <= 2)."""
    points = np.atleast_2d(points)
    hull_pts = np.unique(np.atleast_2d(hull_pts), axis=0)
    d = hull_pts.shape[1]
    if len(hull_pts) == 1:
        return np.linalg.norm(points - hull_pts[0], axis=1)
    if d == 1:
        lo, hi = hull_pts.min(), hull_pts.max()
        return np.maximum(np.maximum(lo - points[:, 0], points[:, 0] - hi), 0.0)
    if d != 2:
        raise ValueError("hull distance is implemented for d <= 2")
    try:
        hull = ConvexHull(hull_pts)
    except QhullError:
        # collinear points: hull is the segment between the extreme points
        c = hull_pts - hull_pts.mean(axis=0)
        direction = np.linalg.svd(c)[2][0]
        proj = c @ direction
        a, b = hull_pts[np.argmin(proj)], hull_pts[np.argmax(proj)]
        return _segment_distance(points, a, b)
    eq = hull.equations
    inside = np.all(points @ eq[:, :-1].T + eq[:, -1] <= 1e-12, axis=1)
    verts = hull_pts[hull.vertices]
    dist = np.full(len(points), np.inf)
    for k in range(len(verts)):
        dist = np.minimum(dist, _segment_distance(points, verts[k], verts[(k + 1) % len(verts)]))
    return np.where(inside, 0.0, dist)


@dataclass
class CorrectorResult:
    J: DiscreteField
    tv: float
    kr_of_m: float
    tv_of_m: float
    support_radius: float
    bound_ratio: float
    paths: list = field(default_factory=list)
    band_violation: float = 0.0

    def to_dict(self) -> dict:
        return {"tv": self.tv, "kr_of_m": self.kr_of_m, "tv_of_m": self.tv_of_m,
                "support_radius": self.support_radius, "bound_ratio": self.bound_ratio,
                "n_paths": len(self.paths), "band_violation": self.band_violation}


def build_corrector(g, m: VertexMeasure, eps: float, cert: GeometryCertificate, localized: bool = True,
                    exact_kr: bool = False) -> CorrectorResult:
    """Field ``J`` on the eps-graph with ``DIVE J = m``.

    ``g`` is the eps-graph (a :class:`RestrictedGraph` or a plain graph at
    scale ``eps``); ``cert`` holds the base-scale constants.
    """
    graph = g.graph if isinstance(g, RestrictedGraph) else g
    if m.graph is not graph:
        raise ValueError("measure lives on a different graph")
    n = m.value_dim
    tvm = m.total_variation()
    tot = m.total()
    if np.any(np.abs(tot) > 1e-10 * max(tvm, 1e-300)) and np.any(np.abs(tot) > 1e-15):
        raise MassImbalance(f"measure has nonzero total mass {tot}")
    vals = np.zeros((graph.n_edges, n))
    supp = m.support()
    pts = graph.points[supp]
    paths = []
    r1 = cert.r1_upper
    C = band_constant(cert)
    worst_band = 0.0
    for comp in range(n):
        plan = scalar_w1_plan(pts, m.values[supp, comp])
        for si, ti, mass in zip(plan.source_index, plan.target_index, plan.mass):
            a, b = int(supp[ti]), int(supp[si])  # positive atom -> negative atom
            path = localized_path(graph, a, b, eps, r1) if localized else shortest_path(graph, a, b)
            ids, signs = path_flux_values(graph, path)
            np.add.at(vals[:, comp], ids, mass * signs)
            paths.append((a, b, path))
            band = float(_segment_distance(graph.points[path], graph.points[a], graph.points[b]).max())
            worst_band = max(worst_band, band / eps - C)
    J = DiscreteField(graph, vals, epsilon=eps)
    tv = embedded_tv(J)
    if len(supp):
        kr = kr_tilde(AtomicMeasure(pts, m.values[supp]), exact=exact_kr)
    else:
        kr = 0.0
    used = np.flatnonzero(np.abs(vals).max(axis=1) > 0)
    if len(used) and len(supp):
        ends = np.unique(graph.edges[used].ravel())
        if graph.dim <= 2:
            radius = float(hull_distance(graph.points[ends], pts).max())
        else:
            radius = max(float(_segment_distance(graph.points[p], graph.points[a], graph.points[b]).max())
                         for a, b, p in paths)
    else:
        radius = 0.0
    denom = kr + eps * tvm
    ratio = tv / denom if denom > 0 else 0.0
    return CorrectorResult(J, tv, kr, tvm, radius, ratio, paths, max(worst_band, 0.0))


def divergence_error(res: CorrectorResult, m: VertexMeasure) -> float:
    return float(np.linalg.norm(dive(res.J).values - m.values, axis=1).sum())


def trend_statistics(eps, ratios) -> dict:
    """Kendall tau of the ratios against ``eps`` and against the refinement level ``1/eps``.

    A positive ``tau_eps`` means the ratio grows with ``eps``; a positive
    ``tau_refinement`` means it grows as the mesh is refined.
    """
    from scipy.stats import kendalltau

    eps = np.asarray(eps, float)
    ratios = np.asarray(ratios, float)
    if len(np.unique(eps)) < 2 or np.ptp(ratios) == 0:
        return {"tau_eps": 0.0, "tau_refinement": 0.0}
    tau = float(kendalltau(eps, ratios).statistic)
    return {"tau_eps": tau, "tau_refinement": -tau}


def verify_bound_scaling(make_case, eps_list, localized: bool = True) -> dict:
    """Bound ratios across scales with their trend statistics.

    ``make_case(eps)`` returns ``(eps_graph, m, cert)``.
    """
    rows = []
    for eps in eps_list:
        g, m, cert = make_case(eps)
        res = build_corrector(g, m, eps, cert, localized=localized)
        rows.append({"eps": float(eps), "divergence_error": divergence_error(res, m), **res.to_dict()})
    ratios = [r["bound_ratio"] for r in rows]
    return {"rows": rows, "max_ratio": max(ratios, default=0.0),
            **trend_statistics([r["eps"] for r in rows], ratios)}
