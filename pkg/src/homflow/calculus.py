"""Discrete vector calculus on embedded graphs and the segment-measure embedding.

A :class:`DiscreteField` stores one value per undirected edge in the
canonical orientation ``u -> v`` (``u < v``); the reversed orientation is
read as the negative, so antisymmetry holds by construction.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegreeTooHigh, GraphMismatch, NotAPath, NotSimple
from .geometry import Box, EmbeddedGraph, region_clip_lengths

_GAUSS2 = np.polynomial.legendre.leggauss(2)


# ---------------------------------------------------------------------------
# fields and vertex measures
# ---------------------------------------------------------------------------

class DiscreteField:
    """Antisymmetric V-valued flux on the edges of an embedded graph."""

    __slots__ = ("graph", "values", "epsilon")

    def __init__(self, graph: EmbeddedGraph, values=None, value_dim: int = 1, epsilon: float = 1.0):
        self.graph = graph
        if values is None:
            values = np.zeros((graph.n_edges, value_dim))
        v = np.array(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != graph.n_edges:
            raise GraphMismatch(f"expected {graph.n_edges} edge values, got {v.shape[0]}")
        self.values = v
        self.epsilon = float(epsilon)

    @classmethod
    def zeros(cls, graph: EmbeddedGraph, value_dim: int = 1, epsilon: float = 1.0) -> "DiscreteField":
        return cls(graph, None, value_dim, epsilon)

    @classmethod
    def from_directed(cls, graph: EmbeddedGraph, items: dict, value_dim: int = 1, epsilon: float = 1.0) -> "DiscreteField":
        """Build from ``{(x, y): value}``; both orientations may be given if consistent."""
        J = cls.zeros(graph, value_dim, epsilon)
        seen = {}
        for (x, y), val in items.items():
            e, s = graph.edge_id(int(x), int(y))
            val = s * np.broadcast_to(np.asarray(val, float), (value_dim,))
            if e in seen and not np.allclose(seen[e], val, rtol=0, atol=1e-15):
                raise ValueError(f"inconsistent antisymmetric values on edge {(x, y)}")
            seen[e] = val
            J.values[e] = val
        return J

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, x: int, y: int) -> np.ndarray:
        e, s = self.graph.edge_id(int(x), int(y))
        return s * self.values[e]

    def directed_values(self) -> tuple[np.ndarray, np.ndarray]:
        """All directed edges and their values (both orientations)."""
        return self.graph.directed_edges(), np.concatenate([self.values, -self.values])

    def _check(self, other: "DiscreteField"):
        if other.graph is not self.graph:
            raise GraphMismatch("fields live on different graphs")

    def __add__(self, other: "DiscreteField") -> "DiscreteField":
        self._check(other)
        return DiscreteField(self.graph, self.values + other.values, epsilon=self.epsilon)

    def __sub__(self, other: "DiscreteField") -> "DiscreteField":
        self._check(other)
        return DiscreteField(self.graph, self.values - other.values, epsilon=self.epsilon)

    def __neg__(self) -> "DiscreteField":
        return DiscreteField(self.graph, -self.values, epsilon=self.epsilon)

    def __mul__(self, c) -> "DiscreteField":
        return DiscreteField(self.graph, self.values * float(c), epsilon=self.epsilon)

    __rmul__ = __mul__

    def times_symmetric(self, s) -> "DiscreteField":
        """Pointwise product with a symmetric edge scalar such as ``hat(psi)``."""
        s = np.asarray(s, float).reshape(-1, 1)
        return DiscreteField(self.graph, self.values * s, epsilon=self.epsilon)

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.graph, self.values.copy(), epsilon=self.epsilon)

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(np.abs(self.values).max(axis=1) > tol)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def to_dict(self) -> dict:
        return {"edges": self.graph.edges.tolist(), "values": self.values.tolist(), "epsilon": self.epsilon}


class VertexMeasure:
    """Finitely supported V-valued measure on the vertices of a graph."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: EmbeddedGraph, values=None, value_dim: int = 1):
        self.graph = graph
        if values is None:
            values = np.zeros((graph.n_vertices, value_dim))
        v = np.array(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != graph.n_vertices:
            raise GraphMismatch(f"expected {graph.n_vertices} vertex values, got {v.shape[0]}")
        self.values = v

    @classmethod
    def from_atoms(cls, graph: EmbeddedGraph, atoms: dict, value_dim: int = 1) -> "VertexMeasure":
        m = cls(graph, None, value_dim)
        for x, val in atoms.items():
            m.values[int(x)] += np.broadcast_to(np.asarray(val, float), (value_dim,))
        return m

    @property
    def value_dim(self) -> int:
        return self.values.shape[1]

    def __add__(self, other: "VertexMeasure") -> "VertexMeasure":
        return VertexMeasure(self.graph, self.values + other.values)

    def __sub__(self, other: "VertexMeasure") -> "VertexMeasure":
        return VertexMeasure(self.graph, self.values - other.values)

    def __neg__(self) -> "VertexMeasure":
        return VertexMeasure(self.graph, -self.values)

    def __mul__(self, c) -> "VertexMeasure":
        return VertexMeasure(self.graph, self.values * float(c))

    __rmul__ = __mul__

    def total(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def total_variation(self, mask=None) -> float:
        v = self.values if mask is None else self.values[np.asarray(mask)]
        return float(np.linalg.norm(v, axis=1).sum())

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(np.abs(self.values).max(axis=1) > tol)

    def atoms(self, tol: float = 0.0) -> list:
        return [(int(i), self.values[i].copy()) for i in self.support(tol)]


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _vertex_values(g: EmbeddedGraph, psi) -> np.ndarray:
    if callable(psi):
        vals = np.asarray(psi(g.points), float)
    else:
        vals = np.asarray(psi, float)
    if vals.shape[0] != g.n_vertices:
        raise GraphMismatch("vertex function has the wrong length")
    return vals


def grad(g: EmbeddedGraph, psi, epsilon: float = 1.0) -> DiscreteField:
    """``(grad psi)(x, y) = psi(y) - psi(x)``; ``psi`` is a vertex array or a callable on points."""
    vals = _vertex_values(g, psi)
    if vals.ndim == 1:
        vals = vals[:, None]
    return DiscreteField(g, vals[g.edges[:, 1]] - vals[g.edges[:, 0]], epsilon=epsilon)


def dive(J: DiscreteField) -> VertexMeasure:
    """Net outflow ``sum_y J(x, y)`` at every vertex."""
    return VertexMeasure(J.graph, J.graph.incidence @ J.values)


def hat(g: EmbeddedGraph, psi) -> np.ndarray:
    """Symmetric edge average ``(psi(x) + psi(y)) / 2``."""
    vals = _vertex_values(g, psi)
    return 0.5 * (vals[g.edges[:, 0]] + vals[g.edges[:, 1]])


def star(K, J: DiscreteField, antisymmetric: bool = True) -> VertexMeasure:
    """``(K * J)(x) = 1/2 sum_y K(x, y) J(x, y)``.

    ``K`` is a :class:`DiscreteField` with one component or a canonical edge
    array; ``antisymmetric`` says how to read the reversed orientation of a
    plain array.
    """
    g = J.graph
    if isinstance(K, DiscreteField):
        if K.graph is not g:
            raise GraphMismatch("fields live on different graphs")
        if K.value_dim != 1:
            raise ValueError("K must be scalar valued")
        k = K.values[:, 0]
        antisymmetric = True
    else:
        k = np.asarray(K, float).reshape(-1)
    prod = 0.5 * k[:, None] * J.values
    out = np.zeros((g.n_vertices, J.value_dim))
    np.add.at(out, g.edges[:, 0], prod)
    np.add.at(out, g.edges[:, 1], prod if antisymmetric else -prod)
    return VertexMeasure(g, out)


def unit_path_flux(g: EmbeddedGraph, path: Sequence[int], value_dim: int = 1, epsilon: float = 1.0) -> DiscreteField:
    """Unit flux along a simple path: +1 forward, -1 backward on each path edge."""
    J = DiscreteField.zeros(g, value_dim, epsilon)
    path = [int(v) for v in path]
    if len(set(path)) != len(path):
        raise NotSimple("path visits a vertex twice")
    for x, y in zip(path[:-1], path[1:]):
        if not g.has_edge(x, y):
            raise NotAPath(f"vertices {x} and {y} are not adjacent")
        e, s = g.edge_id(x, y)
        J.values[e] += s
    return J


def path_flux_values(g: EmbeddedGraph, path: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Edge ids and signs of a vertex path without building a full field (no checks)."""
    ids = np.empty(len(path) - 1, dtype=np.int64)
    signs = np.empty(len(path) - 1)
    for k, (x, y) in enumerate(zip(path[:-1], path[1:])):
        ids[k], signs[k] = g.edge_id(int(x), int(y))
    return ids, signs


# ---------------------------------------------------------------------------
# embedding as a segment measure
# ---------------------------------------------------------------------------

@dataclass
class SegmentMeasure:
    """Matrix-valued measure ``sum_k D_k H^1 |_[a_k, b_k]`` with ``D_k`` of shape (n, d)."""

    a: np.ndarray
    b: np.ndarray
    density: np.ndarray
    epsilon: float = 1.0

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.b - self.a, axis=1)

    def total_variation(self, region=None) -> float:
        """``|mu|(region)`` with the Frobenius norm on V (x) R^d."""
        w = region_clip_lengths(region, self.a, self.b)
        return float((np.linalg.norm(self.density, axis=(1, 2)) * w).sum())

    def mass(self, region=None) -> np.ndarray:
        """``mu(region)`` as an (n, d) matrix."""
        w = region_clip_lengths(region, self.a, self.b)
        return np.einsum("kij,k->ij", self.density, w)

    def to_csv(self) -> str:
        d = self.a.shape[1]
        n = self.density.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        axes = "xyzw"[:d] if d <= 4 else [f"x{i}" for i in range(d)]
        header = [f"a{c}" for c in axes] + [f"b{c}" for c in axes]
        header += [f"D{i}{j}" for i in range(n) for j in range(d)]
        w.writerow(header)
        for a, b, D in zip(self.a, self.b, self.density):
            w.writerow([repr(float(v)) for v in itertools.chain(a, b, D.ravel())])
        return buf.getvalue()


def embed(J: DiscreteField, drop_zero: bool = False) -> SegmentMeasure:
    """Spread each edge value along its segment with the edge direction.

    Both orientations of an edge contribute ``J(x,y) (x) (y-x)/|y-x|``, so the
    half-sum over directed edges equals the canonical value times the tangent.
    """
    g = J.graph
    idx = J.support() if drop_zero else np.arange(g.n_edges)
    a = g.points[g.edges[idx, 0]]
    b = g.points[g.edges[idx, 1]]
    dens = J.values[idx][:, :, None] * g.tangents[idx][:, None, :]
    return SegmentMeasure(a, b, dens, J.epsilon)


def embedded_mass(J: DiscreteField, region=None) -> np.ndarray:
    """``iota J (region)`` without materialising the segment measure."""
    g = J.graph
    w = region_clip_lengths(region, g.points[g.edges[:, 0]], g.points[g.edges[:, 1]])
    return np.einsum("ki,kj,k->ij", J.values, g.tangents, w)


def embedded_tv(J: DiscreteField, region=None) -> float:
    g = J.graph
    w = region_clip_lengths(region, g.points[g.edges[:, 0]], g.points[g.edges[:, 1]])
    return float((np.linalg.norm(J.values, axis=1) * w).sum())


# ---------------------------------------------------------------------------
# polynomial test fields and pairings
# ---------------------------------------------------------------------------

class Polynomial:
    """Polynomial map ``R^d -> R^shape`` stored as ``{exponent tuple: coefficient array}``."""

    def __init__(self, dim: int, terms: dict, shape: tuple = ()):
        self.dim = int(dim)
        self.shape = tuple(shape)
        self.terms = {}
        for exp, c in terms.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.dim or min(exp, default=0) < 0:
                raise ValueError(f"bad exponent {exp}")
            c = np.broadcast_to(np.asarray(c, float), self.shape).copy()
            if exp in self.terms:
                self.terms[exp] = self.terms[exp] + c
            else:
                self.terms[exp] = c

    @classmethod
    def random(cls, dim: int, degree: int, shape: tuple = (), rng=None) -> "Polynomial":
        rng = np.random.default_rng(rng)
        terms = {}
        for exp in itertools.product(range(degree + 1), repeat=dim):
            if sum(exp) <= degree:
                terms[exp] = rng.normal(size=shape)
        return cls(dim, terms, shape)

    @classmethod
    def coordinate(cls, dim: int, k: int) -> "Polynomial":
        exp = [0] * dim
        exp[k] = 1
        return cls(dim, {tuple(exp): 1.0})

    @property
    def degree(self) -> int:
        live = [sum(e) for e, c in self.terms.items() if np.any(c != 0)]
        return max(live, default=0)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        out = np.zeros((len(x),) + self.shape)
        for exp, c in self.terms.items():
            mono = np.prod(x ** np.asarray(exp), axis=1)
            out += mono.reshape((-1,) + (1,) * len(self.shape)) * c
        return out

    def gradient(self) -> "Polynomial":
        """Polynomial with output shape ``shape + (d,)``."""
        terms = {}
        for exp, c in self.terms.items():
            for k in range(self.dim):
                if exp[k] == 0:
                    continue
                new = list(exp)
                new[k] -= 1
                block = np.zeros(self.shape + (self.dim,))
                block[..., k] = exp[k] * c
                key = tuple(new)
                terms[key] = terms.get(key, 0) + block
        return Polynomial(self.dim, terms, self.shape + (self.dim,))

    def stack(self, n: int) -> "Polynomial":
        """Vector polynomial whose every component equals this scalar polynomial."""
        if self.shape:
            raise ValueError("stack expects a scalar polynomial")
        return Polynomial(self.dim, {e: np.full(n, c) for e, c in self.terms.items()}, (n,))


def _segment_points(a, b, nodes, weights, t0=None, t1=None):
    """Gauss nodes on ``[a + t0 (b-a), a + t1 (b-a)]``; returns (points (k,q,d), weights (k,q))."""
    if t0 is None:
        t0 = np.zeros(len(a))
        t1 = np.ones(len(a))
    span = np.maximum(t1 - t0, 0.0)
    tq = t0[:, None] + span[:, None] * (nodes[None, :] + 1) / 2
    pts = a[:, None, :] + tq[..., None] * (b - a)[:, None, :]
    w = 0.5 * span[:, None] * weights[None, :] * np.linalg.norm(b - a, axis=1)[:, None]
    return pts, w


def pair_with_test(m, phi: Polynomial) -> np.ndarray | float:
    """Exact pairing with a polynomial test field of degree at most 3.

    For a :class:`SegmentMeasure` ``phi`` maps into (n, d) matrices and the
    result is ``int <phi, dmu>``; for a :class:`VertexMeasure` ``phi`` maps
    into R^n (or scalars) and the result is ``sum_x <phi(x), m(x)>``.
    Segment integrals use the 2-point Gauss rule, exact up to degree 3.
    """
    if phi.degree > 3:
        raise DegreeTooHigh(f"test polynomial has degree {phi.degree} > 3")
    if isinstance(m, VertexMeasure):
        vals = phi(m.graph.points)
        if vals.ndim == 1:
            vals = vals[:, None] * np.ones((1, m.value_dim))
        return float(np.sum(vals * m.values))
    if not isinstance(m, SegmentMeasure):
        raise TypeError("expected a SegmentMeasure or VertexMeasure")
    if len(m.a) == 0:
        return 0.0
    pts, w = _segment_points(m.a, m.b, *_GAUSS2)
    k, q, d = pts.shape
    vals = phi(pts.reshape(-1, d)).reshape((k, q) + phi.shape)
    if phi.shape == ():
        # scalar test function: pair with the total matrix density
        return np.einsum("kq,kq,kij->ij", vals, w, m.density)
    return float(np.einsum("kqij,kq,kij->", vals, w, m.density))


def pair_with_function(m: SegmentMeasure, fn: Callable, order: int = 8, support: Box | None = None) -> np.ndarray:
    """Pair a segment measure with a scalar function by Gauss-Legendre quadrature.

    Returns the (n, d) matrix ``int fn dmu``. When ``support`` is given the
    integral is restricted to it, so piecewise-smooth test functions with that
    support are integrated at full order.
    """
    if len(m.a) == 0:
        return np.zeros(m.density.shape[1:]) if m.density.ndim == 3 else np.zeros((1, m.a.shape[1]))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    if support is None:
        pts, w = _segment_points(m.a, m.b, nodes, weights)
    else:
        t0, t1 = support.clip_params(m.a, m.b)
        pts, w = _segment_points(m.a, m.b, nodes, weights, t0, np.maximum(t1, t0))
    k, q, d = pts.shape
    vals = np.asarray(fn(pts.reshape(-1, d)), float).reshape(k, q)
    return np.einsum("kq,kq,kij->ij", vals, w, m.density)


def riemann_pairing(m: SegmentMeasure, fn: Callable, n_points: int = 10_000) -> np.ndarray:
    """Midpoint Riemann sum of ``int fn dmu``; a slow independent check."""
    t = (np.arange(n_points) + 0.5) / n_points
    total = np.zeros(m.density.shape[1:])
    for a, b, D in zip(m.a, m.b, m.density):
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        total += D * (np.asarray(fn(pts), float).sum() * np.linalg.norm(b - a) / n_points)
    return total


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

def leibniz_residual(J: DiscreteField, psi) -> float:
    """Max-norm residual of ``dive(hat(psi) J) - psi dive(J) - grad(psi) * J``."""
    g = J.graph
    vals = _vertex_values(g, psi)
    lhs = dive(J.times_symmetric(hat(g, vals))).values
    rhs = vals[:, None] * dive(J).values + star(grad(g, vals), J).values
    return float(np.abs(lhs - rhs).max()) if lhs.size else 0.0


def divergence_pairing_residual(J: DiscreteField, Psi: Polynomial) -> float:
    """``<iota J, grad Psi> + <dive J, Psi>`` for a V-valued polynomial ``Psi``."""
    if Psi.shape == ():
        Psi = Psi.stack(J.value_dim)
    lhs = pair_with_test(embed(J), Psi.gradient())
    rhs = pair_with_test(dive(J), Psi)
    return float(lhs + rhs)


def gradient_comparison(J: DiscreteField, Psi: Polynomial, psi: Polynomial, r3: float, epsilon: float,
                        order: int = 16) -> tuple[float, float]:
    """Both sides of the discrete/continuous gradient comparison.

    Returns ``(|<iota J, Psi (x) grad psi> - <grad(psi) * J, Psi>|, R3 eps Lip(Psi) |grad psi . iota J|)``
    where ``Psi`` maps into V and ``psi`` is scalar. ``Lip(Psi)`` is bounded
    by the maximum gradient norm at the segment quadrature nodes and endpoints.
    """
    g = J.graph
    if Psi.shape == ():
        Psi = Psi.stack(J.value_dim)
    a = g.points[g.edges[:, 0]]
    b = g.points[g.edges[:, 1]]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    pts, w = _segment_points(a, b, nodes, weights)
    k, q, d = pts.shape
    flat = pts.reshape(-1, d)
    Psi_q = Psi(flat).reshape(k, q, -1)
    dpsi_q = psi.gradient()(flat).reshape(k, q, d)
    tau_dpsi = np.einsum("kqd,kd->kq", dpsi_q, g.tangents)
    cont = np.einsum("kqn,kn,kq,kq->", Psi_q, J.values, tau_dpsi, w)
    disc = pair_with_test(star(grad(g, psi), J), Psi) if Psi.degree <= 3 else float(
        np.sum(Psi(g.points) * star(grad(g, psi), J).values))
    lhs = abs(cont - disc)
    gPsi = Psi.gradient()
    probe = np.concatenate([flat, g.points])
    lip = float(np.linalg.norm(gPsi(probe).reshape(len(probe), -1), axis=1).max()) if len(probe) else 0.0
    tv = float(np.einsum("kq,k,kq->", np.abs(tau_dpsi), np.linalg.norm(J.values, axis=1), w))
    return float(lhs), r3 * epsilon * lip * tv
