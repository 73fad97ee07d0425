"""Edge-based localized energies and their stationary random cost families.

Every family is radial: ``f_e(j) = phi_e(|j|)`` with ``phi_e(0) = 0``, so the
cost of an edge does not depend on its orientation. Per-edge parameters are
drawn from a seeded recipe keyed by integer lattice data of the base edge, so
an integer shift of the generation window shifts the parameters with it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .calculus import DiscreteField, embedded_tv
from .errors import GraphMismatch, ScaleMismatch
from .geometry import Box, EmbeddedGraph, RestrictedGraph, cell_uniforms, region_clip_lengths

COST_KINDS = ("weighted_abs", "piecewise_linear_convex", "huberized", "nonconvex_capped")
CONVEX_KINDS = ("weighted_abs", "piecewise_linear_convex", "huberized")

_DEFAULTS = {
    "weighted_abs": {"alpha_min": 1.0, "alpha_max": 1.0},
    "piecewise_linear_convex": {"alpha_min": 1.0, "alpha_max": 1.0,
                                "breakpoints": [1.0], "slopes": [1.0, 2.0]},
    "huberized": {"alpha_min": 1.0, "alpha_max": 1.0, "beta": 1.0, "delta": 0.5},
    "nonconvex_capped": {"alpha_min": 1.0, "alpha_max": 1.0, "beta": 0.5, "gamma": 0.25},
}


@dataclass(frozen=True)
class EdgeCostFamily:
    """Recipe for per-edge costs ``f_e``.

    Parameters are ``alpha_e ~ Uniform[alpha_min, alpha_max]`` per edge plus
    family-wide shape parameters:

    * ``weighted_abs``: ``alpha |j|``
    * ``piecewise_linear_convex``: ``alpha g(|j|)``, ``g`` with increasing ``slopes``
      between ``breakpoints``
    * ``huberized``: ``alpha (|j| + beta huber_delta(|j|))``
    * ``nonconvex_capped``: ``min(alpha |j|, beta + gamma |j|)`` with ``gamma < alpha``
    """

    kind: str = "weighted_abs"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        merged = dict(_DEFAULTS[self.kind])
        merged.update(self.params or {})
        object.__setattr__(self, "params", merged)
        p = merged
        if not 0 < p["alpha_min"] <= p["alpha_max"]:
            raise ValueError("need 0 < alpha_min <= alpha_max")
        if self.kind == "piecewise_linear_convex":
            b, s = np.asarray(p["breakpoints"], float), np.asarray(p["slopes"], float)
            if len(s) != len(b) + 1 or np.any(np.diff(b) <= 0) or np.any(b <= 0):
                raise ValueError("breakpoints must be positive increasing, one fewer than slopes")
            if np.any(np.diff(s) < 0) or s[0] <= 0:
                raise ValueError("slopes must be positive and nondecreasing")
        if self.kind == "huberized" and (p["beta"] < 0 or p["delta"] <= 0):
            raise ValueError("huberized needs beta >= 0 and delta > 0")
        if self.kind == "nonconvex_capped":
            if not (0 < p["gamma"] < p["alpha_min"]) or p["beta"] <= 0:
                raise ValueError("nonconvex_capped needs 0 < gamma < alpha_min and beta > 0")

    @property
    def convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    @property
    def one_homogeneous(self) -> bool:
        return self.kind == "weighted_abs"

    @property
    def lipschitz_L(self) -> float:
        p = self.params
        a = p["alpha_max"]
        if self.kind == "piecewise_linear_convex":
            return a * float(p["slopes"][-1])
        if self.kind == "huberized":
            return a * (1.0 + p["beta"])
        return a

    @property
    def growth_c2(self) -> float:
        """Per-edge constant with ``f_e(j) >= c2 |j|``."""
        p = self.params
        a = p["alpha_min"]
        if self.kind == "piecewise_linear_convex":
            return a * float(p["slopes"][0])
        if self.kind == "nonconvex_capped":
            return p["gamma"]
        return a

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "params": dict(self.params),
                "L": self.lipschitz_L, "c2": self.growth_c2}

    @classmethod
    def from_dict(cls, data: dict) -> "EdgeCostFamily":
        return cls(data.get("kind", "weighted_abs"), int(data.get("seed", 0)), dict(data.get("params", {})))

    def relaxation(self) -> "EdgeCostFamily":
        """Convex minorant used to seed nonconvex searches (``gamma |j|`` for capped costs)."""
        if self.kind != "nonconvex_capped":
            return self
        g = self.params["gamma"]
        return EdgeCostFamily("weighted_abs", self.seed, {"alpha_min": g, "alpha_max": g})

    def alphas(self, graph: EmbeddedGraph) -> np.ndarray:
        p = self.params
        if p["alpha_min"] == p["alpha_max"]:
            return np.full(graph.n_edges, float(p["alpha_min"]))
        u = cell_uniforms(self.seed, edge_keys(graph), 1, stream=7)[:, 0]
        return p["alpha_min"] + (p["alpha_max"] - p["alpha_min"]) * u

    def table(self, graph: EmbeddedGraph) -> "CostTable":
        return CostTable(self, self.alphas(graph))


def edge_keys(graph: EmbeddedGraph) -> np.ndarray:
    """Integer keys identifying base edges up to integer translation.

    With cell labels the key is ``(lower cell, other cell - lower cell)``;
    otherwise it is the floor of the midpoint and a quantized direction.
    """
    e = graph.edges
    if graph.cells is not None:
        cu, cv = graph.cells[e[:, 0]], graph.cells[e[:, 1]]
        swap = np.array([tuple(a) > tuple(b) for a, b in zip(cu.tolist(), cv.tolist())], dtype=bool)
        lo = np.where(swap[:, None], cv, cu)
        hi = np.where(swap[:, None], cu, cv)
        return np.concatenate([lo, hi - lo], axis=1)
    p = graph.points
    mid = np.floor(0.5 * (p[e[:, 0]] + p[e[:, 1]])).astype(np.int64)
    t = graph.tangents
    sign = np.where(t[:, :1] < 0, -1.0, 1.0)
    direc = np.round(t * sign * 1024).astype(np.int64)
    return np.concatenate([mid, direc], axis=1)


@dataclass
class CostTable:
    """Per-edge parameters of a cost family on a fixed graph."""

    family: EdgeCostFamily
    alpha: np.ndarray

    @property
    def kind(self) -> str:
        return self.family.kind

    def phi(self, r, alpha=None) -> np.ndarray:
        """``phi_e(r)`` for norms ``r`` (broadcast against per-edge alpha)."""
        r = np.abs(np.asarray(r, float))
        a = self.alpha if alpha is None else alpha
        p = self.family.params
        if self.kind == "weighted_abs":
            return a * r
        if self.kind == "piecewise_linear_convex":
            return a * _pl_eval(r, np.asarray(p["breakpoints"], float), np.asarray(p["slopes"], float))
        if self.kind == "huberized":
            d = p["delta"]
            hub = np.where(r <= d, r * r / (2 * d), r - d / 2)
            return a * (r + p["beta"] * hub)
        return np.minimum(a * r, p["beta"] + p["gamma"] * r)

    def edge_costs(self, values: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """``scale * f_e(J_e / scale)`` for each edge (values shaped (m, n))."""
        r = np.linalg.norm(np.atleast_2d(values), axis=1)
        if scale == 1.0:
            return self.phi(r)
        return scale * self.phi(r / scale)

    def pl_segments(self, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints and slopes of ``scale * phi(r / scale) / alpha`` for PL families."""
        p = self.family.params
        if self.kind == "weighted_abs":
            return np.zeros(0), np.ones(1)
        if self.kind == "piecewise_linear_convex":
            return scale * np.asarray(p["breakpoints"], float), np.asarray(p["slopes"], float)
        raise ValueError(f"{self.kind} is not piecewise linear convex")


def _pl_eval(r, b, s) -> np.ndarray:
    out = s[0] * np.minimum(r, b[0]) if len(b) else s[0] * r
    for k in range(1, len(s)):
        lo = b[k - 1]
        hi = b[k] if k < len(b) else np.inf
        out = out + s[k] * np.clip(r - lo, 0.0, hi - lo)
    return out


# ---------------------------------------------------------------------------
# localized energy
# ---------------------------------------------------------------------------

class LocalizedEnergy:
    """``F_eps(J, A) = sum_e eps^(d-1) f_e(J_e / eps^(d-1)) H^1([x_e, y_e] cap A)``.

    The sum runs over undirected edges, which equals half the sum over both
    orientations. Parameters are read from the base graph so that the energy
    at scale ``eps`` is the rescaling of the energy at scale 1.
    """

    def __init__(self, graph, costs: EdgeCostFamily, r_lip: float | None = None):
        if isinstance(graph, RestrictedGraph):
            self.restricted = graph
            self.graph = graph.graph
            self.epsilon = graph.epsilon
            self.key_graph = _unscaled(graph)
        else:
            self.restricted = None
            self.graph = graph
            self.epsilon = 1.0
            self.key_graph = graph
        self.costs = costs
        self.table = costs.table(self.key_graph)
        self.r_lip = 0.0 if r_lip is None else float(r_lip)

    def with_costs(self, costs: EdgeCostFamily) -> "LocalizedEnergy":
        """Same graph and scale with a different cost family."""
        new = LocalizedEnergy.__new__(LocalizedEnergy)
        new.__dict__.update(self.__dict__)
        new.costs = costs
        new.table = costs.table(self.key_graph)
        return new

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def scale(self) -> float:
        """Flux scale ``eps^(d-1)``."""
        return self.epsilon ** (self.dim - 1)

    @property
    def C1(self) -> float:
        """Constant of the Lipschitz bound summed over both orientations."""
        return 0.5 * self.costs.lipschitz_L

    @property
    def c2(self) -> float:
        """Constant of the growth bound summed over both orientations."""
        return 0.5 * self.costs.growth_c2

    def clip_weights(self, region) -> np.ndarray:
        g = self.graph
        return region_clip_lengths(region, g.points[g.edges[:, 0]], g.points[g.edges[:, 1]])

    def per_edge(self, J: DiscreteField, region=None) -> np.ndarray:
        if J.graph is not self.graph:
            raise GraphMismatch("field does not live on the energy graph")
        return self.table.edge_costs(J.values, self.scale) * self.clip_weights(region)

    def __call__(self, J: DiscreteField, region=None) -> float:
        return float(self.per_edge(J, region).sum())


def _unscaled(rg: RestrictedGraph) -> EmbeddedGraph:
    return EmbeddedGraph(rg.graph.points / rg.epsilon, rg.graph.edges, rg.graph.cells)


def eval_energy(e: LocalizedEnergy, J: DiscreteField, region=None) -> float:
    """Localized energy of ``J`` on ``region`` (box, list of disjoint boxes, or ``None``)."""
    return e(J, region)


def eval_rescaled(e: LocalizedEnergy, J: DiscreteField, region, eps: float) -> float:
    """Rescaled energy ``eps^d F(J(eps .) / eps^(d-1), A / eps)`` evaluated on the base graph."""
    if abs(eps - e.epsilon) > 1e-12 * max(1.0, eps):
        raise ScaleMismatch(f"energy built at scale {e.epsilon}, asked for {eps}")
    if J.graph is not e.graph:
        raise GraphMismatch("field does not live on the energy graph")
    d = e.dim
    base_points = e.graph.points / eps
    base_vals = J.values / eps ** (d - 1)
    a, b = base_points[e.graph.edges[:, 0]], base_points[e.graph.edges[:, 1]]
    if region is None:
        scaled_region = None
    elif isinstance(region, Box):
        scaled_region = region.scaled(1 / eps)
    else:
        scaled_region = [r.scaled(1 / eps) for r in region]
    w = region_clip_lengths(scaled_region, a, b)
    return float(eps ** d * (e.table.edge_costs(base_vals) * w).sum())


def lower_bound(e: LocalizedEnergy, J: DiscreteField, region=None) -> float:
    """``2 c2 |iota J|(region)``, a lower bound for the energy."""
    return 2 * e.c2 * embedded_tv(J, region)


def lipschitz_gap(e: LocalizedEnergy, J: DiscreteField, Jp: DiscreteField, region: Box | None = None
                  ) -> tuple[float, float]:
    """``(|F(J,A) - F(J',A)|, 2 C1 |iota(J - J')|(B(A, eps R_Lip)))``."""
    gap = abs(e(J, region) - e(Jp, region))
    grown = None if region is None else region.enlarged(e.epsilon * e.r_lip)
    bound = 2 * e.C1 * embedded_tv(J - Jp, grown)
    return gap, bound
