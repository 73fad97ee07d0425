"""Uniform-flow operators: divergence-free discrete fields approximating constant tensors.

For every integer site ``z`` of a window an anchor vertex ``x_z`` (nearest
vertex, lowest index on ties) is chosen, and for every axis ``i`` a shortest
path ``P_{z,i}`` from ``x_z`` to ``x_{z+e_i}`` is stored. The operator sends a
tensor ``j`` (shape ``(n, d)``) to ``R j = sum_z sum_i J_{P_{z,i}} (j e_i)``.
Paths are stored as a signed edge-count matrix ``C`` of shape ``(m, d)`` so
that ``R j = C @ j.T``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .calculus import DiscreteField, dive, embed, embedded_tv, pair_with_function
from .errors import AnchorTooFar, DegenerateOrthotope, Disconnected, GraphMismatch
from .geometry import Box, EmbeddedGraph, GeometryCertificate, RestrictedGraph, path_length, restrict_rescale, \
    shortest_path


@dataclass(eq=False)
class UniformFlowOperator:
    graph: EmbeddedGraph
    certificate: GeometryCertificate
    window: Box
    sites: np.ndarray
    anchors: np.ndarray
    catalogue: dict
    counts: np.ndarray
    long_paths: list = field(default_factory=list)
    variant: str = "shortest"

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def path_bound(self) -> float:
        """``R2 (2 R1 + 1) + 1`` from the certificate."""
        return self.certificate.path_bound

    @property
    def interior_margin(self) -> float:
        """Vertices farther than this from the window complement have zero divergence."""
        return self.certificate.r1_upper + 1e-9

    def anchor(self, z) -> int:
        key = tuple(int(v) for v in z)
        idx = self._site_index.get(key)
        if idx is None:
            raise KeyError(f"site {key} outside the window")
        return int(self.anchors[idx])

    @property
    def _site_index(self) -> dict:
        cache = self.__dict__.get("_site_cache")
        if cache is None:
            cache = {tuple(z): k for k, z in enumerate(self.sites.tolist())}
            self.__dict__["_site_cache"] = cache
        return cache

    def interior_vertices(self, eps: float = 1.0, points=None) -> np.ndarray:
        pts = self.graph.points if points is None else points / eps
        return self.window.dist_to_complement(pts) > self.interior_margin

    def catalogue_json(self) -> str:
        rows = [{"site": list(k[0]), "axis": k[1], "path": v} for k, v in sorted(self.catalogue.items())]
        return json.dumps({"variant": self.variant, "anchors": self.anchors.tolist(), "paths": rows})

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.graph.fingerprint().encode())
        h.update(self.catalogue_json().encode())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        lengths = [path_length(self.graph, p) for p in self.catalogue.values()]
        return {
            "variant": self.variant,
            "window": self.window.to_dict(),
            "n_sites": int(len(self.sites)),
            "n_paths": len(self.catalogue),
            "max_path_length": max(lengths, default=0.0),
            "path_bound": self.path_bound,
            "long_paths": [[list(z), i] for z, i in self.long_paths],
            "fingerprint": self.fingerprint(),
        }


def _integer_sites(window: Box) -> np.ndarray:
    lo = np.ceil(window.lo_arr - 1e-12).astype(int)
    hi = np.floor(window.hi_arr + 1e-12).astype(int)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)


def _anchors(g: EmbeddedGraph, sites: np.ndarray, r1: float) -> np.ndarray:
    k = min(8, g.n_vertices)
    dist, idx = g.kdtree.query(sites.astype(float), k=k)
    dist = np.atleast_2d(dist.reshape(len(sites), -1))
    idx = np.atleast_2d(idx.reshape(len(sites), -1))
    out = np.empty(len(sites), dtype=np.int64)
    for s in range(len(sites)):
        best = dist[s, 0]
        if best > r1 + 1e-12:
            raise AnchorTooFar(f"site {sites[s].tolist()} has no vertex within {r1:.4g}")
        tied = idx[s][dist[s] <= best + 1e-12 * max(1.0, best)]
        out[s] = int(tied.min())
    return out


def build(g: EmbeddedGraph, cert: GeometryCertificate, window: Box, variant: str = "shortest") -> UniformFlowOperator:
    """Anchor every integer site of ``window`` and catalogue the axis paths.

    ``variant="avoid_direct"`` forbids the direct anchor-to-anchor edge when
    a detour exists, which yields a different valid operator used to probe
    operator independence.
    """
    if variant not in ("shortest", "avoid_direct"):
        raise ValueError(f"unknown variant {variant!r}")
    sites = _integer_sites(window)
    anchors = _anchors(g, sites, cert.r1_upper)
    index = {tuple(z): k for k, z in enumerate(sites.tolist())}
    d = g.dim
    counts = np.zeros((g.n_edges, d))
    catalogue = {}
    long_paths = []
    ell = cert.path_bound
    for k, z in enumerate(sites.tolist()):
        for i in range(d):
            nb = list(z)
            nb[i] += 1
            kk = index.get(tuple(nb))
            if kk is None:
                continue
            x, y = int(anchors[k]), int(anchors[kk])
            path = _catalogue_path(g, x, y, variant)
            catalogue[(tuple(z), i)] = path
            if path_length(g, path) > ell + 1e-9:
                long_paths.append((tuple(z), i))
            for a, b in zip(path[:-1], path[1:]):
                e, s = g.edge_id(a, b)
                counts[e, i] += s
    return UniformFlowOperator(g, cert, window, sites, anchors, catalogue, counts, long_paths, variant)


def _catalogue_path(g: EmbeddedGraph, x: int, y: int, variant: str) -> list:
    if variant == "avoid_direct" and x != y and g.has_edge(x, y):
        e, _ = g.edge_id(x, y)
        try:
            return shortest_path(g, x, y, banned_edge=e)
        except Disconnected:
            pass
    return shortest_path(g, x, y)


def _tensor(j, op: UniformFlowOperator) -> np.ndarray:
    j = np.asarray(j, float)
    if j.ndim == 1:
        j = j[None, :]
    if j.shape[1] != op.dim:
        raise ValueError(f"tensor must have {op.dim} columns")
    return j


def apply(op: UniformFlowOperator, j) -> DiscreteField:
    """``R j`` on the base graph."""
    j = _tensor(j, op)
    return DiscreteField(op.graph, op.counts @ j.T)


def apply_rescaled(op: UniformFlowOperator, j, eps: float, rg: RestrictedGraph | None = None) -> DiscreteField:
    """``R_eps j (eps x, eps y) = eps^(d-1) R j (x, y)`` on a restriction of ``eps X``."""
    if rg is None:
        rg = restrict_rescale(op.graph, eps, None)
    if rg.base is not op.graph:
        raise GraphMismatch("restricted graph does not come from the operator graph")
    if abs(rg.epsilon - eps) > 1e-12:
        raise ValueError("restricted graph has a different scale")
    j = _tensor(j, op)
    vals = eps ** (op.dim - 1) * (op.counts[rg.edge_map] @ j.T)
    return DiscreteField(rg.graph, vals, epsilon=eps)


def interior_divergence(op: UniformFlowOperator, j) -> float:
    """Total variation of ``dive(R j)`` on vertices inside the interior margin."""
    div = dive(apply(op, j))
    return div.total_variation(op.interior_vertices())


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpFunction:
    """C^1 test function ``p(x) prod_k (4 t_k (1 - t_k))^2`` on a box, zero outside.

    ``t_k`` is the affine coordinate of ``x_k`` in ``[lo_k, hi_k]`` and ``p``
    is the affine factor ``c0 + c . (x - center)``.
    """

    support: Box
    c0: float = 1.0
    c: tuple = ()

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        lo, hi = self.support.lo_arr, self.support.hi_arr
        t = (x - lo) / (hi - lo)
        inside = np.all((t >= 0) & (t <= 1), axis=1)
        tt = np.clip(t, 0, 1)
        bump = np.prod((4 * tt * (1 - tt)) ** 2, axis=1)
        lin = self.c0 + ((x - self.support.center) @ np.asarray(self.c, float) if len(self.c) else 0.0)
        return np.where(inside, bump * lin, 0.0)

    def integral(self) -> float:
        """Exact integral by tensor Gauss-Legendre (integrand is a polynomial on the box)."""
        nodes, weights = np.polynomial.legendre.leggauss(8)
        lo, hi = self.support.lo_arr, self.support.hi_arr
        axes = [lo[k] + (hi[k] - lo[k]) * (nodes + 1) / 2 for k in range(len(lo))]
        wts = [(hi[k] - lo[k]) * weights / 2 for k in range(len(lo))]
        pts = np.array(list(itertools.product(*axes)))
        w = np.prod(np.array(list(itertools.product(*wts))), axis=1)
        return float((self(pts) * w).sum())


def standard_test_functions(dim: int = 2) -> list:
    """Five bumps of varying position, size and tilt inside the unit cube."""
    boxes = [
        ((0.1,) * dim, (0.9,) * dim),
        ((0.2,) * dim, (0.7,) * dim),
        (tuple([0.05] + [0.3] * (dim - 1)), tuple([0.6] + [0.95] * (dim - 1))),
        (tuple([0.37] * dim), tuple([0.93] * dim)),
        (tuple([0.13] * dim), tuple([0.81] + [0.52] * (dim - 1))),
    ]
    tilts = [(), tuple([1.0] + [0.0] * (dim - 1)), tuple([0.5] * dim), tuple([-2.0] + [1.0] * (dim - 1)), ()]
    return [BumpFunction(Box(lo, hi), 1.0, t) for (lo, hi), t in zip(boxes, tilts)]


def verify_convergence(op: UniformFlowOperator, j, phi: BumpFunction, eps_list) -> list[dict]:
    """``|<iota_eps R_eps j, phi> - j int phi|`` for every ``eps``.

    The support of ``phi`` must lie within ``eps * window`` shrunk by the
    interior margin at every level.
    """
    j = _tensor(j, op)
    target = j * phi.integral()
    rows = []
    for eps in eps_list:
        shrink = eps * (op.path_bound + op.certificate.r1_upper)
        lo, hi = op.window.lo_arr * eps + shrink, op.window.hi_arr * eps - shrink
        if np.any(phi.support.lo_arr < lo - 1e-12) or np.any(phi.support.hi_arr > hi + 1e-12):
            raise ValueError(f"test function support leaves the valid window at eps={eps}")
        dom = phi.support.enlarged(2 * eps * op.path_bound)
        rg = restrict_rescale(op.graph, eps, dom)
        J = apply_rescaled(op, j, eps, rg)
        val = pair_with_function(embed(J, drop_zero=True), phi, order=8, support=phi.support)
        rows.append({"eps": float(eps), "pairing": val.tolist(), "error": float(np.linalg.norm(val - target))})
    return rows


def verify_boundedness(op: UniformFlowOperator, j, orthotopes, eps: float) -> float:
    """``max_Q |iota_eps R_eps j|(Q) / (|j| L^d(Q))`` over the given orthotopes."""
    j = _tensor(j, op)
    nj = float(np.linalg.norm(j))
    if nj == 0:
        return 0.0
    worst = 0.0
    for Q in orthotopes:
        if np.any(Q.sides < eps - 1e-12):
            raise DegenerateOrthotope(f"orthotope {Q} does not contain an eps-cube")
        rg = restrict_rescale(op.graph, eps, Q.enlarged(eps * op.certificate.r3 + 1e-9))
        J = apply_rescaled(op, j, eps, rg)
        worst = max(worst, embedded_tv(J, Q) / (nj * Q.volume))
    return worst


def random_orthotopes(n: int, eps: float, region: Box, rng=None, max_side: float = 0.5) -> list[Box]:
    """Random boxes with sides in ``[eps, max_side]`` inside ``region``."""
    rng = np.random.default_rng(rng)
    out = []
    for _ in range(n):
        sides = rng.uniform(eps, max(eps, max_side), size=region.dim)
        sides = np.minimum(sides, region.sides)
        lo = region.lo_arr + rng.random(region.dim) * (region.sides - sides)
        out.append(Box(tuple(lo), tuple(lo + sides)))
    return out
